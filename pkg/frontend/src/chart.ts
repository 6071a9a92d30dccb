/** Per-round completion chart; plots the service's numbers verbatim. */

export function drawCompletionChart(
  ctx: CanvasRenderingContext2D,
  completions: number[],
  maxRounds: number,
): void {
  const w = ctx.canvas.width;
  const h = ctx.canvas.height;
  const pad = 24;
  ctx.clearRect(0, 0, w, h);

  ctx.strokeStyle = "#8a8f98";
  ctx.beginPath();
  ctx.moveTo(pad, pad / 2);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad / 2, h - pad);
  ctx.stroke();

  const x = (round: number) =>
    pad + ((w - 1.5 * pad) * round) / Math.max(maxRounds - 1, 1);
  const y = (rate: number) => h - pad - (h - 1.5 * pad) * rate;

  ctx.fillStyle = "#555555";
  ctx.font = "10px sans-serif";
  for (const tick of [0, 0.5, 1]) {
    ctx.fillText(tick.toFixed(1), 2, y(tick) + 3);
  }

  if (completions.length === 0) return;
  ctx.strokeStyle = "#3b6fd4";
  ctx.fillStyle = "#3b6fd4";
  ctx.beginPath();
  completions.forEach((rate, round) => {
    if (round === 0) ctx.moveTo(x(round), y(rate));
    else ctx.lineTo(x(round), y(rate));
  });
  ctx.stroke();
  completions.forEach((rate, round) => {
    ctx.beginPath();
    ctx.arc(x(round), y(rate), 3, 0, Math.PI * 2);
    ctx.fill();
    ctx.fillText(rate.toFixed(2), x(round) - 8, y(rate) - 8);
  });
}
