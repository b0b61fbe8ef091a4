/** Keyboard steering: held arrows/WASD become a world-frame velocity
 * vector, sent at a fixed rate while held, with one zero command on
 * release. Up maps to +x, Right to +y; diagonals are normalized. */

const UP = new Set(["ArrowUp", "KeyW"]);
const DOWN = new Set(["ArrowDown", "KeyS"]);
const RIGHT = new Set(["ArrowRight", "KeyD"]);
const LEFT = new Set(["ArrowLeft", "KeyA"]);

const STEER_KEYS = new Set([...UP, ...DOWN, ...RIGHT, ...LEFT]);

export class KeyTracker {
  private held = new Set<string>();

  keydown(code: string): boolean {
    if (!STEER_KEYS.has(code)) return false;
    this.held.add(code);
    return true;
  }

  keyup(code: string): boolean {
    if (!STEER_KEYS.has(code)) return false;
    this.held.delete(code);
    return true;
  }

  clear(): void {
    this.held.clear();
  }

  /** Current command vector for the given speed magnitude. */
  vector(maxSpeed: number): [number, number] {
    const axis = (pos: Set<string>, neg: Set<string>) => {
      let v = 0;
      for (const k of this.held) {
        if (pos.has(k)) v = 1;
      }
      for (const k of this.held) {
        if (neg.has(k)) v -= 1;
      }
      return v;
    };
    const ax = axis(UP, DOWN);
    const ay = axis(RIGHT, LEFT);
    const norm = Math.hypot(ax, ay);
    if (norm === 0) return [0, 0];
    return [(maxSpeed * ax) / norm, (maxSpeed * ay) / norm];
  }
}

export const COMMAND_PERIOD = 0.1; // s → 10 Hz while held

/** Rate limiter around the key state: emits the held vector every
 * COMMAND_PERIOD and exactly one (0,0) when all keys are released. */
export class CommandPump {
  private lastSent = -Infinity;
  private wasMoving = false;

  /** Returns the vector to send now, or null for "send nothing". */
  poll(now: number, vec: [number, number]): [number, number] | null {
    const moving = vec[0] !== 0 || vec[1] !== 0;
    if (moving) {
      if (now - this.lastSent >= COMMAND_PERIOD) {
        this.lastSent = now;
        this.wasMoving = true;
        return vec;
      }
      return null;
    }
    if (this.wasMoving) {
      this.wasMoving = false;
      this.lastSent = now;
      return [0, 0];
    }
    return null;
  }
}
