/** Canvas renderers for the two world kinds the service can serve. */

import type { Disc, Frame, GridFrame, PusherFrame } from "./types";

/** Cell type codes carried in grid frames, index = wire code. */
export const GRID_CELL_TYPES = [
  "empty",
  "wall",
  "door-closed",
  "door-locked",
  "triangle",
  "square",
  "circle",
  "goal",
] as const;

/** Grid color codes: 0 is "no color", 1.. follow the service catalog order. */
export const GRID_COLOR_NAMES = [
  "none",
  "blue",
  "green",
  "gray",
  "purple",
  "red",
  "yellow",
] as const;

export const GRID_COLOR_HEX: Record<string, string> = {
  none: "#d9d2c5",
  blue: "#3b6fd4",
  green: "#3f9e4d",
  gray: "#8a8f98",
  purple: "#8d55c8",
  red: "#d1453b",
  yellow: "#e0b521",
};

/** Pusher disc colors, keyed by the catalog names in service payloads. */
export const PUSHER_COLOR_HEX: Record<string, string> = {
  red: "#d1453b",
  yellow: "#e0b521",
  blue: "#3b6fd4",
  white: "#f2f0e9",
  pink: "#e88bb8",
  green: "#3f9e4d",
  magenta: "#c333b9",
  cyan: "#35b6c9",
};

export class SchemaError extends Error {}

export function renderFrame(ctx: CanvasRenderingContext2D, frame: Frame): void {
  if (frame.kind === "grid") {
    renderGrid(ctx, frame);
  } else if (frame.kind === "pusher") {
    renderPusher(ctx, frame);
  } else {
    throw new SchemaError(
      `unknown frame kind ${(frame as { kind: string }).kind}`,
    );
  }
}

function renderGrid(ctx: CanvasRenderingContext2D, frame: GridFrame): void {
  const tile = Math.floor(
    Math.min(ctx.canvas.width / frame.width, ctx.canvas.height / frame.height),
  );
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  for (let y = 0; y < frame.height; y++) {
    for (let x = 0; x < frame.width; x++) {
      const [type, color] = frame.grid[y][x];
      drawTile(ctx, x * tile, y * tile, tile, type, color);
    }
  }
  const [ax, ay] = frame.agent;
  ctx.fillStyle = "#111111";
  ctx.beginPath();
  ctx.arc((ax + 0.5) * tile, (ay + 0.5) * tile, tile * 0.32, 0, Math.PI * 2);
  ctx.fill();
  if (frame.held) {
    // held-object glyph pinned to the top-left corner
    ctx.fillStyle = GRID_COLOR_HEX[frame.held.color];
    drawShape(ctx, frame.held.shape, tile * 0.7, tile * 0.7, tile * 0.28);
    ctx.strokeStyle = "#111111";
    ctx.strokeRect(tile * 0.2, tile * 0.2, tile, tile);
  }
}

function drawTile(
  ctx: CanvasRenderingContext2D,
  px: number,
  py: number,
  tile: number,
  type: number,
  color: number,
): void {
  const name = GRID_CELL_TYPES[type];
  const hex = GRID_COLOR_HEX[GRID_COLOR_NAMES[color]];
  ctx.fillStyle = "#efeae0";
  ctx.fillRect(px, py, tile, tile);
  switch (name) {
    case "empty":
      break;
    case "wall":
      ctx.fillStyle = "#4a4439";
      ctx.fillRect(px, py, tile, tile);
      break;
    case "door-closed":
    case "door-locked":
      ctx.fillStyle = hex;
      ctx.fillRect(px + tile * 0.15, py, tile * 0.7, tile);
      ctx.strokeStyle = name === "door-locked" ? "#111111" : "#ffffff";
      ctx.strokeRect(px + tile * 0.3, py + tile * 0.3, tile * 0.4, tile * 0.4);
      break;
    case "goal":
      ctx.fillStyle = hex;
      ctx.fillRect(px + 1, py + 1, tile - 2, tile - 2);
      ctx.fillStyle = "#ffffff";
      ctx.fillRect(px + tile * 0.35, py + tile * 0.35, tile * 0.3, tile * 0.3);
      break;
    default:
      ctx.fillStyle = hex;
      drawShape(ctx, name, px + tile / 2, py + tile / 2, tile * 0.36);
  }
}

function drawShape(
  ctx: CanvasRenderingContext2D,
  shape: string,
  cx: number,
  cy: number,
  r: number,
): void {
  ctx.beginPath();
  if (shape === "triangle") {
    ctx.moveTo(cx, cy - r);
    ctx.lineTo(cx - r, cy + r);
    ctx.lineTo(cx + r, cy + r);
    ctx.closePath();
  } else if (shape === "square") {
    ctx.rect(cx - r, cy - r, 2 * r, 2 * r);
  } else {
    ctx.arc(cx, cy, r, 0, Math.PI * 2);
  }
  ctx.fill();
}

function renderPusher(ctx: CanvasRenderingContext2D, frame: PusherFrame): void {
  const scale = Math.min(ctx.canvas.width, ctx.canvas.height) / frame.workspace;
  const px = (v: number) => v * scale;
  ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
  ctx.fillStyle = "#efeae0";
  ctx.fillRect(0, 0, px(frame.workspace), px(frame.workspace));

  // target marker
  ctx.strokeStyle = PUSHER_COLOR_HEX[frame.target.block];
  ctx.setLineDash([4, 3]);
  ctx.beginPath();
  ctx.arc(px(frame.target.pos[0]), px(frame.target.pos[1]),
    px(frame.target.radius), 0, Math.PI * 2);
  ctx.stroke();
  ctx.setLineDash([]);

  // gripper trajectory so far
  if (frame.trajectory.length > 1) {
    ctx.strokeStyle = "#11111155";
    ctx.beginPath();
    ctx.moveTo(px(frame.trajectory[0][0]), px(frame.trajectory[0][1]));
    for (const [x, y] of frame.trajectory.slice(1)) {
      ctx.lineTo(px(x), px(y));
    }
    ctx.stroke();
  }

  const disc = (d: Disc, stroke?: string) => {
    ctx.fillStyle = PUSHER_COLOR_HEX[d.color];
    ctx.beginPath();
    ctx.arc(px(d.pos[0]), px(d.pos[1]), px(d.radius), 0, Math.PI * 2);
    ctx.fill();
    if (stroke) {
      ctx.strokeStyle = stroke;
      ctx.stroke();
    }
  };
  for (const d of frame.fixed) disc(d, "#111111");
  for (const d of frame.movable) disc(d);

  ctx.fillStyle = "#111111";
  ctx.beginPath();
  ctx.arc(px(frame.gripper.pos[0]), px(frame.gripper.pos[1]),
    px(frame.gripper.radius), 0, Math.PI * 2);
  ctx.fill();
}
