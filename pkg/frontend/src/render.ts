/** Canvas rendering: occupancy map, agents, and bands as time-colored
 * pose circles, plus the velocity/distance strip chart. */

import { COLOR_HORIZON, timeColor } from "./color.js";
import type { BandMsg, ScenarioMsg, SnapshotMsg } from "./protocol.js";
import type { PlotPoint } from "./state.js";
import { Camera, fitCamera, worldToScreen } from "./transform.js";

export interface BandDot {
  x: number;
  y: number;
  color: string;
}

/** One dot per band pose, colored by its offset from the band start; the
 * same offset produces the same color on every band. */
export function bandDots(band: BandMsg): BandDot[] {
  const t0 = band.times.length > 0 ? band.times[0] : 0;
  return band.poses.map(([x, y], i) => ({
    x,
    y,
    color: timeColor(band.times[i] - t0),
  }));
}

/** All bands in a snapshot (robot first), as drawable dot runs. */
export function snapshotBands(snap: SnapshotMsg): BandDot[][] {
  const out: BandDot[][] = [];
  if (snap.bands.robot !== null) out.push(bandDots(snap.bands.robot));
  for (const hb of snap.bands.humans) out.push(bandDots(hb));
  return out;
}

const MODE_COLORS: Record<string, string> = {
  SingleBand: "#2563eb",
  DualBand: "#059669",
  VelObs: "#d97706",
  BackoffRecovery: "#dc2626",
};

export function modeColor(mode: string): string {
  return MODE_COLORS[mode] ?? "#6b7280";
}

export function mapCamera(scn: ScenarioMsg, w: number, h: number): Camera {
  return fitCamera(
    scn.map.width * scn.map.resolution,
    scn.map.height * scn.map.resolution,
    w,
    h,
  );
}

export function drawWorld(
  ctx: CanvasRenderingContext2D,
  scn: ScenarioMsg,
  snap: SnapshotMsg | null,
  selectedHuman: string | null,
): void {
  const { width: w, height: h } = ctx.canvas;
  const cam = mapCamera(scn, w, h);
  ctx.fillStyle = "#f8fafc";
  ctx.fillRect(0, 0, w, h);

  // occupancy cells
  const res = scn.map.resolution;
  const cell = cam.scale * res;
  ctx.fillStyle = "#334155";
  for (let iy = 0; iy < scn.map.height; iy++) {
    const row = scn.map.rows[iy];
    for (let ix = 0; ix < scn.map.width; ix++) {
      if (row[ix] !== "#") continue;
      const [sx, sy] = worldToScreen(cam, ix * res, (iy + 1) * res);
      ctx.fillRect(sx, sy, cell + 0.5, cell + 0.5);
    }
  }

  // goal marker
  const [gx, gy] = worldToScreen(cam, scn.robot_goal[0], scn.robot_goal[1]);
  ctx.strokeStyle = "#16a34a";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.moveTo(gx - 6, gy - 6);
  ctx.lineTo(gx + 6, gy + 6);
  ctx.moveTo(gx - 6, gy + 6);
  ctx.lineTo(gx + 6, gy - 6);
  ctx.stroke();

  if (snap === null) return;

  for (const run of snapshotBands(snap)) {
    for (const dot of run) {
      const [sx, sy] = worldToScreen(cam, dot.x, dot.y);
      ctx.fillStyle = dot.color;
      ctx.globalAlpha = 0.55;
      ctx.beginPath();
      ctx.arc(sx, sy, Math.max(2.5, cam.scale * 0.07), 0, 2 * Math.PI);
      ctx.fill();
      ctx.globalAlpha = 1.0;
    }
  }

  for (const a of snap.agents) {
    const [sx, sy] = worldToScreen(cam, a.x, a.y);
    const r = cam.scale * a.radius;
    ctx.fillStyle = a.kind === "robot" ? "#1d4ed8" : "#b45309";
    ctx.globalAlpha = 0.85;
    ctx.beginPath();
    ctx.arc(sx, sy, r, 0, 2 * Math.PI);
    ctx.fill();
    ctx.globalAlpha = 1.0;
    // heading tick
    ctx.strokeStyle = "#0f172a";
    ctx.beginPath();
    ctx.moveTo(sx, sy);
    ctx.lineTo(sx + r * Math.cos(a.theta), sy - r * Math.sin(a.theta));
    ctx.stroke();
    ctx.fillStyle = "#0f172a";
    ctx.font = "11px sans-serif";
    const tag = a.id === selectedHuman ? `${a.id} (keys)` : a.id;
    ctx.fillText(tag, sx + r + 3, sy - 3);
  }
}

/** Dual-axis strip chart: robot speed (left axis), minimum human distance
 * (right axis), speed points colored by the active mode. */
export function drawPlots(
  ctx: CanvasRenderingContext2D,
  points: readonly PlotPoint[],
  vMax: number = 1.0,
  dMax: number = 5.0,
): void {
  const { width: w, height: h } = ctx.canvas;
  ctx.fillStyle = "#ffffff";
  ctx.fillRect(0, 0, w, h);
  if (points.length < 2) return;
  const t0 = points[0].t;
  const t1 = points[points.length - 1].t;
  const span = Math.max(1e-9, t1 - t0);
  const px = (t: number) => ((t - t0) / span) * (w - 40) + 32;
  const pySpeed = (v: number) => h - 14 - (Math.min(v, vMax) / vMax) * (h - 24);
  const pyDist = (d: number) => h - 14 - (Math.min(d, dMax) / dMax) * (h - 24);

  ctx.strokeStyle = "#94a3b8";
  ctx.strokeRect(32, 6, w - 40, h - 20);

  ctx.strokeStyle = "#475569";
  ctx.beginPath();
  let started = false;
  for (const p of points) {
    if (p.minDist === null) continue;
    const x = px(p.t);
    const y = pyDist(p.minDist);
    if (started) ctx.lineTo(x, y);
    else ctx.moveTo(x, y);
    started = true;
  }
  ctx.stroke();

  for (const p of points) {
    ctx.fillStyle = modeColor(p.mode);
    ctx.fillRect(px(p.t) - 1, pySpeed(p.speed) - 1, 2, 2);
  }

  ctx.fillStyle = "#0f172a";
  ctx.font = "10px sans-serif";
  ctx.fillText(`${vMax.toFixed(1)} m/s`, 2, 14);
  ctx.fillText("0", 22, h - 12);
  ctx.fillText(`${dMax.toFixed(0)} m`, w - 26, 14);
}

export { COLOR_HORIZON };
