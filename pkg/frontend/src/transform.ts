/** World(meters) → screen(pixels) affine transform with a flipped y axis
 * (world y grows north, canvas y grows down). */

export interface Camera {
  scale: number; // px per meter
  ox: number; // screen x of world origin
  oy: number; // screen y of world origin
}

/** Fit a map of the given metric size into a canvas, centered, with a
 * uniform pixel margin. */
export function fitCamera(
  mapW: number,
  mapH: number,
  canvasW: number,
  canvasH: number,
  margin: number = 16,
): Camera {
  const scale = Math.min(
    (canvasW - 2 * margin) / mapW,
    (canvasH - 2 * margin) / mapH,
  );
  const ox = (canvasW - scale * mapW) / 2;
  const oy = canvasH - (canvasH - scale * mapH) / 2;
  return { scale, ox, oy };
}

export function worldToScreen(
  cam: Camera,
  x: number,
  y: number,
): [number, number] {
  return [cam.ox + cam.scale * x, cam.oy - cam.scale * y];
}
