/** Mapping between canvas (CSS pixel) space and original image pixels.
 *
 * The canvas displays the image scaled to cssWidth x cssHeight; clicks are
 * sent to the server in original image coordinates, and markers are drawn
 * back at the center of the clicked pixel.
 */

export interface ImagePixel {
  row: number;
  col: number;
}

export interface CanvasPoint {
  x: number;
  y: number;
}

function clampIndex(value: number, upper: number): number {
  return Math.min(upper - 1, Math.max(0, value));
}

/** The image pixel under a canvas point (inverts the display scale). */
export function canvasToImage(
  point: CanvasPoint,
  cssWidth: number,
  cssHeight: number,
  imageWidth: number,
  imageHeight: number,
): ImagePixel {
  const col = clampIndex(Math.floor((point.x * imageWidth) / cssWidth), imageWidth);
  const row = clampIndex(Math.floor((point.y * imageHeight) / cssHeight), imageHeight);
  return { row, col };
}

/** The canvas point at the center of an image pixel. */
export function imageToCanvas(
  pixel: ImagePixel,
  cssWidth: number,
  cssHeight: number,
  imageWidth: number,
  imageHeight: number,
): CanvasPoint {
  return {
    x: ((pixel.col + 0.5) * cssWidth) / imageWidth,
    y: ((pixel.row + 0.5) * cssHeight) / imageHeight,
  };
}

/** Canvas size that scales an image to maxSide on its long edge, keeping
 * aspect ratio (small images are scaled up so clicking stays practical). */
export function fitCanvas(
  imageWidth: number,
  imageHeight: number,
  maxSide: number,
): { width: number; height: number } {
  const scale = maxSide / Math.max(imageWidth, imageHeight);
  return {
    width: Math.max(1, Math.round(imageWidth * scale)),
    height: Math.max(1, Math.round(imageHeight * scale)),
  };
}
