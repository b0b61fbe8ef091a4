/** Band pose coloring: a pure map from time offset to color, so the same
 * instant gets the same color on every agent's band. */

/** Band horizon used to normalize time offsets, in seconds. */
export const COLOR_HORIZON = 5.0;

/** Color for a pose `offset` seconds past the band start: blue (now)
 * through green to red (horizon). Clamps outside [0, horizon]. */
export function timeColor(offset: number, horizon: number = COLOR_HORIZON): string {
  const u = Math.min(1, Math.max(0, offset / horizon));
  const hue = 220 - 220 * u;
  return `hsl(${Math.round(hue)} 85% 50%)`;
}
