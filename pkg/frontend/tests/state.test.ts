import { describe, expect, it } from "vitest";

import type { ScenarioMsg, SnapshotMsg } from "../src/protocol.js";
import { RingBuffer, STALE_AFTER, ViewStore } from "../src/state.js";

function snap(t: number, over: Partial<SnapshotMsg> = {}): SnapshotMsg {
  return {
    v: 1,
    type: "snapshot",
    t,
    mode: "SingleBand",
    backoff_phase: "",
    agents: [
      {
        id: "robot", kind: "robot", x: 1, y: 2, theta: 0,
        vx: 0.3, vy: 0.4, omega: 0, radius: 0.3, activity: null,
      },
    ],
    bands: { robot: null, humans: [] },
    metrics: { path_length: 0, hr_distances: { h1: 3.0, h2: 1.5 } },
    transitions: [],
    ...over,
  };
}

function scenario(externals: string[]): ScenarioMsg {
  return {
    v: 1,
    type: "scenario",
    name: "x",
    map: {
      resolution: 0.1, origin: [0, 0], width: 2, height: 1, rows: [".."],
    },
    robot_start: [0, 0],
    robot_goal: [1, 0],
    external_humans: externals,
  };
}

describe("RingBuffer", () => {
  it("evicts oldest entries past capacity", () => {
    const rb = new RingBuffer<number>(3);
    for (const n of [1, 2, 3, 4, 5]) rb.push(n);
    expect([...rb.values()]).toEqual([3, 4, 5]);
    expect(rb.length).toBe(3);
  });

  it("rejects non-positive capacity", () => {
    expect(() => new RingBuffer(0)).toThrow();
  });
});

describe("ViewStore", () => {
  it("appends one plot point per snapshot with the closest human", () => {
    const store = new ViewStore();
    store.applySnapshot(snap(0.1), 100);
    store.applySnapshot(snap(0.2), 100.1);
    const pts = store.plots.values();
    expect(pts.length).toBe(2);
    expect(pts[0].speed).toBeCloseTo(0.5, 12); // hypot(0.3, 0.4)
    expect(pts[0].minDist).toBeCloseTo(1.5, 12);
  });

  it("records null distance when nobody is around", () => {
    const store = new ViewStore();
    store.applySnapshot(
      snap(0.1, { metrics: { path_length: 0, hr_distances: {} } }),
      1,
    );
    expect(store.plots.values()[0].minDist).toBeNull();
  });

  it("walks connecting → live → stale → closed", () => {
    const store = new ViewStore();
    expect(store.status(0)).toBe("connecting");
    store.applySnapshot(snap(0.1), 10);
    expect(store.status(10.1)).toBe("live");
    expect(store.status(10 + STALE_AFTER + 0.1)).toBe("stale");
    store.markClosed();
    expect(store.status(10.2)).toBe("closed");
  });

  it("auto-selects the first externally controlled human", () => {
    const store = new ViewStore();
    store.applyScenario(scenario(["h2", "h5"]));
    expect(store.selectedHuman).toBe("h2");
    store.applyScenario(scenario(["h9"]));
    expect(store.selectedHuman).toBe("h2"); // selection is sticky
  });

  it("leaves selection empty without external humans", () => {
    const store = new ViewStore();
    store.applyScenario(scenario([]));
    expect(store.selectedHuman).toBeNull();
  });
});
