/** Client-side view state: the latest snapshot, static scenario geometry,
 * bounded plot history, and connection health. */

import type { ScenarioMsg, SnapshotMsg } from "./protocol.js";

/** Append-only buffer that evicts its oldest entries past a fixed size. */
export class RingBuffer<T> {
  private items: T[] = [];

  constructor(readonly capacity: number) {
    if (capacity <= 0) throw new Error("capacity must be positive");
  }

  push(item: T): void {
    this.items.push(item);
    if (this.items.length > this.capacity) {
      this.items.splice(0, this.items.length - this.capacity);
    }
  }

  values(): readonly T[] {
    return this.items;
  }

  get length(): number {
    return this.items.length;
  }
}

export interface PlotPoint {
  t: number;
  speed: number;
  minDist: number | null;
  mode: string;
}

export type Status = "connecting" | "live" | "stale" | "closed";

/** Snapshots older than this (wall seconds) freeze the view as stale. */
export const STALE_AFTER = 1.0;

export class ViewStore {
  snapshot: SnapshotMsg | null = null;
  scenario: ScenarioMsg | null = null;
  selectedHuman: string | null = null;
  readonly plots = new RingBuffer<PlotPoint>(600);
  private lastWall = -Infinity;
  private closed = false;

  applyScenario(msg: ScenarioMsg): void {
    this.scenario = msg;
    if (this.selectedHuman === null && msg.external_humans.length > 0) {
      this.selectedHuman = msg.external_humans[0];
    }
  }

  applySnapshot(msg: SnapshotMsg, wallNow: number): void {
    this.snapshot = msg;
    this.lastWall = wallNow;
    this.closed = false;
    const robot = msg.agents.find((a) => a.kind === "robot");
    const speed = robot ? Math.hypot(robot.vx, robot.vy) : 0;
    const dists = Object.values(msg.metrics.hr_distances);
    this.plots.push({
      t: msg.t,
      speed,
      minDist: dists.length > 0 ? Math.min(...dists) : null,
      mode: msg.mode,
    });
  }

  markClosed(): void {
    this.closed = true;
  }

  status(wallNow: number): Status {
    if (this.snapshot === null) return "connecting";
    if (this.closed) return "closed";
    return wallNow - this.lastWall > STALE_AFTER ? "stale" : "live";
  }
}
