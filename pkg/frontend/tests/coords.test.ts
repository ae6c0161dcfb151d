// Coordinate fidelity between the scaled canvas and original image pixels:
// the pixel the server receives is exactly the pixel under the cursor, and
// a marker drawn for that pixel lands back in the same canvas cell.

import { describe, expect, it } from "vitest";

import { canvasToImage, fitCanvas, imageToCanvas } from "../src/coords.js";
import { UiSession, type SessionApi } from "../src/session.js";

function echoApi(received: Array<{ row: number; col: number }>): SessionApi {
  return {
    async addClick(_id, row, col, _positive) {
      received.push({ row, col });
      return {
        payload: { clicks: received.length, mask_summary: { area: 0, bbox: null } },
        clickCount: received.length,
      };
    },
    async getMask() {
      return { h: 1, w: 1, runs: [] };
    },
    async undo() {
      throw new Error("unused");
    },
    async reset() {
      throw new Error("unused");
    },
  };
}

describe("canvasToImage", () => {
  it("inverts the display scale exactly", () => {
    // 1024x768 image shown on a 640x480 canvas (scale 0.625)
    expect(canvasToImage({ x: 0, y: 0 }, 640, 480, 1024, 768)).toEqual({
      row: 0,
      col: 0,
    });
    expect(canvasToImage({ x: 320, y: 240 }, 640, 480, 1024, 768)).toEqual({
      row: 384,
      col: 512,
    });
    expect(canvasToImage({ x: 639.9, y: 479.9 }, 640, 480, 1024, 768)).toEqual({
      row: 767,
      col: 1023,
    });
  });

  it("clamps points on the far edge into the image", () => {
    const pixel = canvasToImage({ x: 640, y: 480 }, 640, 480, 64, 64);
    expect(pixel).toEqual({ row: 63, col: 63 });
  });

  it("round-trips pixel centers at any scale", () => {
    const sizes = [
      { css: [640, 480], img: [1024, 768] }, // downscale
      { css: [512, 512], img: [64, 64] }, // upscale
      { css: [333, 198], img: [100, 50] }, // odd ratios
    ];
    for (const { css, img } of sizes) {
      for (let row = 0; row < img[1]; row += 7) {
        for (let col = 0; col < img[0]; col += 7) {
          const point = imageToCanvas({ row, col }, css[0], css[1], img[0], img[1]);
          const back = canvasToImage(point, css[0], css[1], img[0], img[1]);
          expect(back).toEqual({ row, col });
        }
      }
    }
  });
});

describe("click coordinates reaching the server", () => {
  it("sends the exact pixel under the cursor on a scaled canvas", async () => {
    const received: Array<{ row: number; col: number }> = [];
    const session = new UiSession(echoApi(received), "s", 1024, 768);
    const cssWidth = 640;
    const cssHeight = 480;

    const screenPoints = [
      { x: 5, y: 5 },
      { x: 101.25, y: 77.5 },
      { x: 639, y: 479 },
    ];
    for (const point of screenPoints) {
      const pixel = canvasToImage(point, cssWidth, cssHeight, 1024, 768);
      const result = await session.placeClick(pixel.row, pixel.col, true);
      expect(result).toBe("ok");
    }
    expect(received).toEqual([
      { row: Math.floor((5 * 768) / 480), col: Math.floor((5 * 1024) / 640) },
      {
        row: Math.floor((77.5 * 768) / 480),
        col: Math.floor((101.25 * 1024) / 640),
      },
      { row: Math.floor((479 * 768) / 480), col: Math.floor((639 * 1024) / 640) },
    ]);
  });
});

describe("fitCanvas", () => {
  it("scales the long edge to maxSide preserving aspect", () => {
    expect(fitCanvas(1024, 768, 640)).toEqual({ width: 640, height: 480 });
    expect(fitCanvas(64, 64, 512)).toEqual({ width: 512, height: 512 });
    expect(fitCanvas(50, 100, 500)).toEqual({ width: 250, height: 500 });
  });

  it("never collapses to zero", () => {
    expect(fitCanvas(10000, 1, 100).height).toBeGreaterThanOrEqual(1);
  });
});
