/** Application wiring: file pickers, canvas interaction (left click adds
 * foreground, right click removes), undo/reset buttons, IoU readout when a
 * ground-truth mask was uploaded, and error toasts. */

import { ApiClient } from "./api.js";
import { canvasToImage, fitCanvas } from "./coords.js";
import { renderFrame } from "./overlay.js";
import { UiSession } from "./session.js";

const MAX_CANVAS_SIDE = 640;

function element<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
}

const api = new ApiClient("");
const canvas = element<HTMLCanvasElement>("canvas");
const imageInput = element<HTMLInputElement>("image-input");
const gtInput = element<HTMLInputElement>("gt-input");
const startButton = element<HTMLButtonElement>("start");
const undoButton = element<HTMLButtonElement>("undo");
const resetButton = element<HTMLButtonElement>("reset");
const downloadLink = element<HTMLAnchorElement>("download");
const statusLabel = element<HTMLSpanElement>("status");
const iouLabel = element<HTMLSpanElement>("iou");
const toast = element<HTMLDivElement>("toast");

let session: UiSession | null = null;
let bitmap: ImageBitmap | null = null;
let toastTimer: number | undefined;

function showToast(message: string): void {
  toast.textContent = message;
  toast.classList.add("visible");
  window.clearTimeout(toastTimer);
  toastTimer = window.setTimeout(() => toast.classList.remove("visible"), 2600);
}

function redraw(): void {
  if (!session || !bitmap) return;
  renderFrame(canvas, bitmap, session.mask, session.clicks,
    session.imageWidth, session.imageHeight);
  statusLabel.textContent = `${session.clickCount} click${session.clickCount === 1 ? "" : "s"}`;
  iouLabel.textContent = session.iou === null ? "" : `IoU ${(session.iou * 100).toFixed(1)}%`;
  undoButton.disabled = !session.canUndo;
  resetButton.disabled = !session.canReset;
  downloadLink.classList.toggle("hidden", session.mask === null);
  if (session.lastError) showToast(session.lastError);
}

async function startSession(): Promise<void> {
  const file = imageInput.files?.[0];
  if (!file) {
    showToast("choose an image first");
    return;
  }
  startButton.disabled = true;
  try {
    const gt = gtInput.files?.[0];
    const info = await api.createSession(file, gt ?? undefined);
    session = new UiSession(api, info.session_id, info.width, info.height);
    bitmap = await createImageBitmap(file);
    const size = fitCanvas(info.width, info.height, MAX_CANVAS_SIDE);
    canvas.width = size.width;
    canvas.height = size.height;
    canvas.classList.remove("hidden");
    downloadLink.href = api.maskPngUrl(info.session_id);
    redraw();
    statusLabel.textContent = "session ready — left click the object";
  } catch (err) {
    showToast(err instanceof Error ? err.message : String(err));
  } finally {
    startButton.disabled = false;
  }
}

async function handleClick(event: MouseEvent, positive: boolean): Promise<void> {
  if (!session) return;
  const rect = canvas.getBoundingClientRect();
  const pixel = canvasToImage(
    { x: event.clientX - rect.left, y: event.clientY - rect.top },
    rect.width,
    rect.height,
    session.imageWidth,
    session.imageHeight,
  );
  const result = await session.placeClick(pixel.row, pixel.col, positive);
  if (result === "needs_positive") {
    showToast("the first click must be positive (left click)");
  } else if (result === "busy") {
    return; // dropped while a request is in flight
  }
  redraw();
}

canvas.addEventListener("click", (event) => {
  void handleClick(event, true);
});
canvas.addEventListener("contextmenu", (event) => {
  event.preventDefault();
  void handleClick(event, false);
});
startButton.addEventListener("click", () => {
  void startSession();
});
undoButton.addEventListener("click", async () => {
  if (!session) return;
  await session.undoClick();
  redraw();
});
resetButton.addEventListener("click", async () => {
  if (!session) return;
  await session.resetSession();
  redraw();
});
