/** Canvas rendering: base image, semi-transparent mask overlay, and click
 * markers (green positive / blue negative dots with a white ring). */

import type { RleMask } from "./api.js";
import type { ClickRecord } from "./session.js";
import { decodeRle } from "./rle.js";
import { imageToCanvas } from "./coords.js";

export const OVERLAY_ALPHA = 0.45;
export const MARKER_RADIUS = 6;

const POSITIVE_COLOR = "#17c964";
const NEGATIVE_COLOR = "#3a86ff";

export function renderFrame(
  canvas: HTMLCanvasElement,
  image: ImageBitmap,
  mask: RleMask | null,
  clicks: readonly ClickRecord[],
  imageWidth: number,
  imageHeight: number,
): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.imageSmoothingEnabled = true;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.drawImage(image, 0, 0, canvas.width, canvas.height);
  if (mask) {
    drawMask(ctx, mask, canvas.width, canvas.height);
  }
  for (const click of clicks) {
    drawMarker(ctx, click, canvas.width, canvas.height, imageWidth, imageHeight);
  }
}

function drawMask(
  ctx: CanvasRenderingContext2D,
  mask: RleMask,
  cssWidth: number,
  cssHeight: number,
): void {
  const flat = decodeRle(mask);
  const buffer = document.createElement("canvas");
  buffer.width = mask.w;
  buffer.height = mask.h;
  const bufferCtx = buffer.getContext("2d");
  if (!bufferCtx) return;
  const pixels = bufferCtx.createImageData(mask.w, mask.h);
  const alpha = Math.round(OVERLAY_ALPHA * 255);
  for (let i = 0; i < flat.length; i++) {
    if (flat[i]) {
      pixels.data[i * 4] = 255; // red overlay
      pixels.data[i * 4 + 3] = alpha;
    }
  }
  bufferCtx.putImageData(pixels, 0, 0);
  const smoothing = ctx.imageSmoothingEnabled;
  ctx.imageSmoothingEnabled = false; // keep mask pixels crisp when scaled
  ctx.drawImage(buffer, 0, 0, cssWidth, cssHeight);
  ctx.imageSmoothingEnabled = smoothing;
}

function drawMarker(
  ctx: CanvasRenderingContext2D,
  click: ClickRecord,
  cssWidth: number,
  cssHeight: number,
  imageWidth: number,
  imageHeight: number,
): void {
  const point = imageToCanvas(
    { row: click.row, col: click.col },
    cssWidth,
    cssHeight,
    imageWidth,
    imageHeight,
  );
  ctx.beginPath();
  ctx.arc(point.x, point.y, MARKER_RADIUS, 0, Math.PI * 2);
  ctx.fillStyle = click.positive ? POSITIVE_COLOR : NEGATIVE_COLOR;
  ctx.fill();
  ctx.lineWidth = 2;
  ctx.strokeStyle = "#ffffff";
  ctx.stroke();
}
