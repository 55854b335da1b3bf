/** App bootstrap: wires the viewer, controls, timeline, and service. */

import { Client, ServiceError } from "./api.js";
import { Timeline } from "./timeline.js";
import { SliceViewer } from "./viewer.js";
import { AXES, axisExtent } from "./slices.js";
import type { Axis, StepRecord } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing #${id}`);
  }
  return node as T;
}

const client = new Client("");
const canvas = el<HTMLCanvasElement>("slice");
const viewer = new SliceViewer(client, canvas);
const timeline = new Timeline();

const volumeSelect = el<HTMLSelectElement>("volume-select");
const axisSelect = el<HTMLSelectElement>("axis-select");
const sliceSlider = el<HTMLInputElement>("slice-slider");
const sliceLabel = el<HTMLSpanElement>("slice-label");
const channelSelect = el<HTMLSelectElement>("channel-select");
const opacitySlider = el<HTMLInputElement>("opacity-slider");
const statusLine = el<HTMLDivElement>("status");
const badge = el<HTMLSpanElement>("badge");
const diceLabel = el<HTMLSpanElement>("dice");
const timelineList = el<HTMLUListElement>("timeline");
const refineOne = el<HTMLButtonElement>("refine-one");
const refineAuto = el<HTMLButtonElement>("refine-auto");
const resetBtn = el<HTMLButtonElement>("reset-prompt");

let sessionId: string | null = null;
let busy = false;

function toast(message: string, retryable = false): void {
  statusLine.textContent = retryable ? `${message} (busy, try again)` : message;
  statusLine.className = retryable ? "status warn" : "status";
}

function setBusy(value: boolean): void {
  busy = value;
  for (const btn of [refineOne, refineAuto, resetBtn]) {
    btn.disabled = value || sessionId === null;
  }
  canvas.style.cursor = value ? "wait" : "crosshair";
}

function renderTimeline(appended: StepRecord[] | null): void {
  if (appended === null) {
    timelineList.innerHTML = "";
    return;
  }
  for (const entry of timeline.all.slice(timeline.length - appended.length)) {
    const li = document.createElement("li");
    const dice = entry.dice !== undefined ? ` dice ${entry.dice.toFixed(3)}` : "";
    li.textContent =
      `step ${entry.step}: seed (${entry.seed.join(",")}) ` +
      `+${entry.added}/-${entry.removed} -> ${entry.maskVoxels} vox${dice}` +
      (entry.stabilised ? "  [converged]" : "");
    timelineList.appendChild(li);
  }
  if (timeline.converged) {
    toast("converged");
  }
  const dice = timeline.lastDice;
  diceLabel.textContent = dice !== undefined ? `Dice ${dice.toFixed(4)}` : "";
}

async function refreshClassification(): Promise<void> {
  if (!sessionId) {
    return;
  }
  try {
    const cls = await client.classification(sessionId);
    badge.textContent = cls.classification;
    badge.className = `badge ${cls.classification}`;
  } catch {
    badge.textContent = "-";
    badge.className = "badge";
  }
}

async function redraw(): Promise<void> {
  await viewer.fetchOverlay();
  await viewer.draw();
  sliceLabel.textContent = `${viewer.index + 1}/${viewer.axisExtent()}`;
}

async function loadVolumes(): Promise<void> {
  const { volumes } = await client.listVolumes();
  volumeSelect.innerHTML = "";
  for (const meta of volumes) {
    const opt = document.createElement("option");
    opt.value = meta.volume_id;
    opt.textContent = `${meta.volume_id} ${meta.dims.join("x")}`;
    volumeSelect.appendChild(opt);
  }
  if (volumes.length) {
    await bindVolume(volumes[0].volume_id);
  } else {
    toast("no volumes loaded; start the service with --volume");
  }
}

async function bindVolume(volumeId: string): Promise<void> {
  const meta = await client.volume(volumeId);
  const session = await client.createSession(volumeId);
  sessionId = session.session_id;
  viewer.bind(meta, sessionId);
  timeline.reset();
  renderTimeline(null);
  channelSelect.innerHTML = "";
  for (let cIdx = 0; cIdx < meta.channels; cIdx++) {
    const opt = document.createElement("option");
    opt.value = String(cIdx);
    opt.textContent = `channel ${cIdx}`;
    channelSelect.appendChild(opt);
  }
  syncSliceSlider();
  setBusy(false);
  badge.textContent = "-";
  diceLabel.textContent = "";
  toast(`session ${sessionId} on ${volumeId}; click a voxel to prompt`);
  await redraw();
}

function syncSliceSlider(): void {
  sliceSlider.max = String(viewer.axisExtent() - 1);
  sliceSlider.value = String(viewer.index);
}

canvas.addEventListener("click", async (ev) => {
  if (busy || !sessionId) {
    return;
  }
  const rect = canvas.getBoundingClientRect();
  const voxel = viewer.voxelAt(ev.clientX - rect.left, ev.clientY - rect.top);
  if (!voxel) {
    return;
  }
  setBusy(true);
  try {
    viewer.snapshotOverlay();
    const res = await client.prompt(sessionId, voxel);
    viewer.promptMarker = voxel;
    timeline.reset();
    renderTimeline(null);
    toast(
      `prompt (${voxel.join(",")}): ${res.mask_voxels} voxels` +
        (res.dice !== undefined ? `, dice ${res.dice.toFixed(3)}` : "")
    );
    diceLabel.textContent =
      res.dice !== undefined ? `Dice ${res.dice.toFixed(4)}` : "";
    await redraw();
    await refreshClassification();
  } catch (err) {
    if (err instanceof ServiceError) {
      toast(err.message, err.retryable);
    } else {
      toast(String(err));
    }
  } finally {
    setBusy(false);
  }
});

async function refine(steps: number | "auto"): Promise<void> {
  if (busy || !sessionId) {
    return;
  }
  setBusy(true);
  try {
    viewer.snapshotOverlay();
    const res = await client.refine(sessionId, steps);
    timeline.extend(res.steps);
    renderTimeline(res.steps);
    await redraw();
    await refreshClassification();
  } catch (err) {
    if (err instanceof ServiceError) {
      toast(err.message, err.retryable);
    } else {
      toast(String(err));
    }
  } finally {
    setBusy(false);
  }
}

refineOne.addEventListener("click", () => void refine(1));
refineAuto.addEventListener("click", () => void refine("auto"));
resetBtn.addEventListener("click", async () => {
  if (busy || !sessionId) {
    return;
  }
  setBusy(true);
  try {
    await client.resetPrompt(sessionId);
    viewer.clearOverlay();
    timeline.reset();
    renderTimeline(null);
    badge.textContent = "-";
    diceLabel.textContent = "";
    toast("prompt cleared; click to place a new one");
    await redraw();
  } finally {
    setBusy(false);
  }
});

volumeSelect.addEventListener("change", () => void bindVolume(volumeSelect.value));
axisSelect.addEventListener("change", async () => {
  viewer.axis = axisSelect.value as Axis;
  viewer.index = Math.min(
    viewer.index,
    axisExtent(viewer.dims, viewer.axis) - 1
  );
  syncSliceSlider();
  await redraw();
});
sliceSlider.addEventListener("input", async () => {
  viewer.index = Number(sliceSlider.value);
  await redraw();  // scrubbing never touches session state
});
channelSelect.addEventListener("change", async () => {
  viewer.channel = Number(channelSelect.value);
  await redraw();
});
opacitySlider.addEventListener("input", async () => {
  viewer.opacity = Number(opacitySlider.value) / 100;
  await viewer.draw();
});

for (const axis of AXES) {
  const opt = document.createElement("option");
  opt.value = axis;
  opt.textContent = `axis ${axis}`;
  axisSelect.appendChild(opt);
}
axisSelect.value = "c";

void loadVolumes().catch((err) => toast(String(err)));
