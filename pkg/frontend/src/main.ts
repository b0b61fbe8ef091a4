/** Operator console entry point: one state store fed by the network,
 * drained by the render loop and the keyboard command pump. */

import { CommandPump, KeyTracker } from "./keyboard.js";
import { connect } from "./net.js";
import { humanCommand } from "./protocol.js";
import { drawPlots, drawWorld } from "./render.js";
import { ViewStore } from "./state.js";

const HUMAN_SPEED = 1.1; // m/s commanded while a key is held

const store = new ViewStore();
const params = new URLSearchParams(location.search);
const base =
  params.get("server") ?? `${location.protocol}//${location.host}`;
const conn = connect(base, store);

const worldCanvas = document.getElementById("world") as HTMLCanvasElement;
const plotCanvas = document.getElementById("plots") as HTMLCanvasElement;
const statusEl = document.getElementById("status") as HTMLElement;
const modeEl = document.getElementById("mode") as HTMLElement;
const hintEl = document.getElementById("hint") as HTMLElement;

const keys = new KeyTracker();
const pump = new CommandPump();

window.addEventListener("keydown", (ev) => {
  if (ev.repeat) return;
  if (keys.keydown(ev.code)) {
    ev.preventDefault();
    if (store.selectedHuman === null) {
      hintEl.textContent = "no externally controlled human in this scenario";
    }
  }
});
window.addEventListener("keyup", (ev) => {
  if (keys.keyup(ev.code)) ev.preventDefault();
});
window.addEventListener("blur", () => keys.clear());

setInterval(() => {
  if (store.selectedHuman === null) return;
  const vec = pump.poll(performance.now() / 1000, keys.vector(HUMAN_SPEED));
  if (vec !== null) {
    conn.send(
      humanCommand(store.selectedHuman, vec[0], vec[1], Date.now() / 1000),
    );
  }
}, 20);

let frames = 0;
let fps = 0;
let fpsWindow = performance.now();

function frame(): void {
  const now = performance.now() / 1000;
  const ctx = worldCanvas.getContext("2d")!;
  if (store.scenario !== null) {
    drawWorld(ctx, store.scenario, store.snapshot, store.selectedHuman);
  } else {
    ctx.fillStyle = "#f8fafc";
    ctx.fillRect(0, 0, worldCanvas.width, worldCanvas.height);
    ctx.fillStyle = "#64748b";
    ctx.font = "16px sans-serif";
    ctx.fillText("connecting…", 24, 32);
  }
  drawPlots(plotCanvas.getContext("2d")!, store.plots.values());

  const st = store.status(now);
  statusEl.textContent = `${st} · ${fps} fps`;
  statusEl.className = st;
  if (store.snapshot !== null) {
    const bp = store.snapshot.backoff_phase;
    modeEl.textContent =
      `t=${store.snapshot.t.toFixed(1)}s  mode=${store.snapshot.mode}` +
      (bp ? ` (${bp})` : "");
  }

  frames += 1;
  const wallMs = performance.now();
  if (wallMs - fpsWindow >= 1000) {
    fps = frames;
    frames = 0;
    fpsWindow = wallMs;
  }
  requestAnimationFrame(frame);
}

requestAnimationFrame(frame);
