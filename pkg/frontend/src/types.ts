/** Wire types mirroring the session service's JSON responses. */

export interface GrammarTemplate {
  name: string;
  pattern: string;
  slots: Record<string, string[]>;
}

export interface Grammar {
  version: number;
  domain: "grid" | "pusher";
  terminals: string[];
  templates: GrammarTemplate[];
}

export interface HealthInfo {
  status: string;
  domain: "grid" | "pusher";
  config_fingerprint: string;
  n_parameters: number;
  correction_mode: string;
  max_rounds: number;
}

export interface GridHeldObject {
  shape: string;
  color: string;
  pos: null;
}

export interface GridFrame {
  kind: "grid";
  width: number;
  height: number;
  /** grid[y][x] = [typeCode, colorCode] */
  grid: [number, number][][];
  agent: [number, number];
  held: GridHeldObject | null;
  doors_open: boolean[];
}

export interface Disc {
  color: string;
  pos: [number, number];
  radius: number;
}

export interface PusherFrame {
  kind: "pusher";
  workspace: number;
  gripper: { pos: [number, number]; radius: number; orientation: number };
  movable: Disc[];
  fixed: Disc[];
  target: { pos: [number, number]; radius: number; block: string };
  trajectory: [number, number][];
}

export type Frame = GridFrame | PusherFrame;

export interface RolloutResponse {
  round: number;
  completion: number;
  n_steps: number;
  frames: Frame[];
  status: SessionStatus;
}

export interface CorrectionResponse {
  round: number;
  phrase: string;
  kind: string;
  tokens: number[] | null;
  status: SessionStatus;
}

export type SessionStatus =
  | "awaiting-rollout"
  | "awaiting-correction"
  | "complete";

export interface SessionCreated {
  session_id: string;
  task_id: string;
  instruction: string;
  status: SessionStatus;
  grammar: Grammar;
  max_rounds: number;
}

export interface CorrectionRecord {
  round: number;
  phrase: string;
  auto: boolean;
  kind: string;
  tokens: number[] | null;
  scalar: number | null;
}

export interface RolloutSummary {
  round: number;
  completion: number;
  n_steps: number;
  frames: Frame[];
}

export interface SessionState {
  session_id: string;
  task_id: string;
  domain: "grid" | "pusher";
  instruction: string;
  status: SessionStatus;
  seed: number;
  completions: number[];
  corrections: CorrectionRecord[];
  rollouts: RolloutSummary[];
  max_rounds: number;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  detail: unknown;
}
