/** Websocket + scenario-fetch plumbing with automatic reconnection. */

import { parseServerMessage, ScenarioMsg } from "./protocol.js";
import { ViewStore } from "./state.js";

export interface Connection {
  send(text: string): boolean;
  close(): void;
}

export function connect(
  baseUrl: string,
  store: ViewStore,
  wallClock: () => number = () => performance.now() / 1000,
): Connection {
  let sock: WebSocket | null = null;
  let stopped = false;

  const wsUrl = baseUrl.replace(/^http/, "ws") + "/ws";

  fetch(baseUrl + "/scenario")
    .then((r) => r.json())
    .then((msg: ScenarioMsg) => store.applyScenario(msg))
    .catch(() => undefined);

  const open = () => {
    if (stopped) return;
    sock = new WebSocket(wsUrl);
    sock.onmessage = (ev) => {
      const msg = parseServerMessage(String(ev.data));
      if (msg !== null && msg.type === "snapshot") {
        store.applySnapshot(msg, wallClock());
      }
    };
    sock.onclose = () => {
      store.markClosed();
      if (!stopped) setTimeout(open, 1000);
    };
    sock.onerror = () => sock?.close();
  };
  open();

  return {
    send(text: string): boolean {
      if (sock !== null && sock.readyState === WebSocket.OPEN) {
        sock.send(text);
        return true;
      }
      return false;
    },
    close(): void {
      stopped = true;
      sock?.close();
    },
  };
}
