/** App shell: wires the session API to the canvas, composer and chart. */

import { ApiError, SessionApi } from "./api";
import { drawCompletionChart } from "./chart";
import { composePhrase, slotNames, unknownWords } from "./grammar";
import { Playback } from "./playback";
import { renderFrame, SchemaError } from "./render";
import type { Frame, Grammar, GrammarTemplate, SessionState } from "./types";

const api = new SessionApi(import.meta.env.VITE_API_BASE ?? "");

const $ = <T extends HTMLElement>(id: string): T =>
  document.getElementById(id) as T;

const worldCanvas = $<HTMLCanvasElement>("world");
const chartCanvas = $<HTMLCanvasElement>("chart");
const banner = $<HTMLDivElement>("banner");
const instructionEl = $<HTMLDivElement>("instruction");
const historyEl = $<HTMLUListElement>("history");
const statusEl = $<HTMLSpanElement>("status");
const scrubber = $<HTMLInputElement>("scrubber");
const frameLabel = $<HTMLSpanElement>("frame-label");
const templateSelect = $<HTMLSelectElement>("template");
const slotsEl = $<HTMLDivElement>("slots");
const freeText = $<HTMLInputElement>("free-text");
const submitBtn = $<HTMLButtonElement>("submit");
const autoBtn = $<HTMLButtonElement>("auto");
const rolloutBtn = $<HTMLButtonElement>("rollout");
const playBtn = $<HTMLButtonElement>("play");
const newSessionBtn = $<HTMLButtonElement>("new-session");
const seedInput = $<HTMLInputElement>("seed");
const downloadBtn = $<HTMLButtonElement>("download");

let grammar: Grammar | null = null;
let sessionId: string | null = null;
let frames: Frame[] = [];
let snapshot: SessionState | null = null;

const playback = new Playback(0, (i) => {
  if (frames[i]) {
    try {
      renderFrame(worldCanvas.getContext("2d")!, frames[i]);
    } catch (e) {
      showError(e);
    }
  }
  scrubber.value = String(i);
  frameLabel.textContent = `${i + 1} / ${frames.length}`;
});

function showError(e: unknown): void {
  const msg =
    e instanceof ApiError
      ? `${e.code}: ${e.message}`
      : e instanceof SchemaError
        ? `schema mismatch: ${e.message}`
        : String(e);
  banner.textContent = msg;
  banner.hidden = false;
}

function clearError(): void {
  banner.hidden = true;
}

function currentTemplate(): GrammarTemplate | null {
  if (!grammar) return null;
  return grammar.templates.find((t) => t.name === templateSelect.value) ?? null;
}

function rebuildSlotInputs(): void {
  slotsEl.replaceChildren();
  const template = currentTemplate();
  if (!template) return;
  for (const name of slotNames(template)) {
    const select = document.createElement("select");
    select.dataset.slot = name;
    select.append(new Option(`choose ${name}…`, ""));
    for (const option of template.slots[name]) {
      select.append(new Option(option, option));
    }
    select.addEventListener("change", refreshComposer);
    slotsEl.append(select);
  }
  refreshComposer();
}

function composedPhrase(): string | null {
  const template = currentTemplate();
  if (!template) return null;
  const selections: Record<string, string> = {};
  for (const select of slotsEl.querySelectorAll("select")) {
    selections[select.dataset.slot!] = select.value;
  }
  return composePhrase(template, selections);
}

function refreshComposer(): void {
  const free = freeText.value.trim();
  if (free && grammar) {
    const bad = unknownWords(grammar, free);
    if (bad.length > 0) {
      submitBtn.disabled = true;
      banner.textContent = `not in vocabulary: ${bad.join(", ")}`;
      banner.hidden = false;
      return;
    }
    clearError();
    submitBtn.disabled = snapshot?.status !== "awaiting-correction";
    return;
  }
  submitBtn.disabled =
    composedPhrase() === null || snapshot?.status !== "awaiting-correction";
}

async function refreshState(): Promise<void> {
  if (!sessionId) return;
  snapshot = await api.state(sessionId);
  statusEl.textContent = snapshot.status;
  instructionEl.textContent = snapshot.instruction;
  drawCompletionChart(
    chartCanvas.getContext("2d")!,
    snapshot.completions,
    snapshot.max_rounds,
  );
  historyEl.replaceChildren(
    ...snapshot.corrections.map((c) => {
      const li = document.createElement("li");
      li.textContent = `round ${c.round}: “${c.phrase}” (${c.kind}${c.auto ? ", auto" : ""})`;
      return li;
    }),
  );
  rolloutBtn.disabled = snapshot.status !== "awaiting-rollout";
  autoBtn.disabled = snapshot.status !== "awaiting-correction";
  refreshComposer();
}

async function newSession(): Promise<void> {
  clearError();
  try {
    const created = await api.createSession(Number(seedInput.value));
    sessionId = created.session_id;
    grammar = created.grammar;
    frames = [];
    playback.load(0);
    templateSelect.replaceChildren(
      ...grammar.templates.map((t) => new Option(t.pattern, t.name)),
    );
    rebuildSlotInputs();
    await refreshState();
  } catch (e) {
    showError(e);
  }
}

async function runRollout(): Promise<void> {
  if (!sessionId) return;
  clearError();
  rolloutBtn.disabled = true;
  try {
    const res = await api.rollout(sessionId);
    frames = res.frames;
    scrubber.max = String(Math.max(frames.length - 1, 0));
    playback.load(frames.length);
    playback.play();
    await refreshState();
  } catch (e) {
    showError(e);
    await refreshState();
  }
}

async function submitCorrection(auto: boolean): Promise<void> {
  if (!sessionId) return;
  clearError();
  try {
    if (auto) {
      await api.autoCorrect(sessionId);
    } else {
      const phrase = freeText.value.trim() || composedPhrase();
      if (!phrase) return;
      await api.correct(sessionId, phrase);
      freeText.value = "";
    }
    await refreshState();
  } catch (e) {
    showError(e);
  }
}

function downloadReplay(): void {
  if (!snapshot) return;
  const blob = new Blob([JSON.stringify(snapshot, null, 2)], {
    type: "application/json",
  });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = `session-${snapshot.session_id}.json`;
  a.click();
  URL.revokeObjectURL(a.href);
}

newSessionBtn.addEventListener("click", () => void newSession());
rolloutBtn.addEventListener("click", () => void runRollout());
submitBtn.addEventListener("click", () => void submitCorrection(false));
autoBtn.addEventListener("click", () => void submitCorrection(true));
templateSelect.addEventListener("change", rebuildSlotInputs);
freeText.addEventListener("input", refreshComposer);
scrubber.addEventListener("input", () => {
  playback.stop();
  playback.seek(Number(scrubber.value));
});
playBtn.addEventListener("click", () =>
  playback.playing ? playback.stop() : playback.play(),
);
downloadBtn.addEventListener("click", downloadReplay);

void api
  .health()
  .then((h) => {
    statusEl.textContent = `service ok (${h.domain}, ${h.correction_mode})`;
  })
  .catch(showError);
