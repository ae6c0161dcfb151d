/** Client-side session state machine.
 *
 * Invariants enforced here:
 * - the click list mirrors the server's acknowledged state after every
 *   request (count cross-checked against the X-Click-Count header);
 * - a busy flag serializes requests: clicks arriving while one is in
 *   flight are dropped, so the server never sees interleaved mutations;
 * - the first click of a session must be positive (blocked locally);
 * - a fetched mask is applied only if it belongs to the current click
 *   count, so a stale response can never overwrite newer state;
 * - undo with nothing to undo sends no request at all.
 */

import type { AckedState, RleMask, StatePayload } from "./api.js";
import { ApiError } from "./api.js";

export interface ClickRecord {
  row: number;
  col: number;
  positive: boolean;
}

export type ActionResult =
  | "ok"
  | "busy"
  | "needs_positive"
  | "nothing_to_undo"
  | "rejected";

/** The slice of the API the session consumes (injectable for tests). */
export interface SessionApi {
  addClick(
    id: string,
    row: number,
    col: number,
    positive: boolean,
  ): Promise<AckedState>;
  getMask(id: string): Promise<RleMask>;
  undo(id: string): Promise<AckedState>;
  reset(id: string): Promise<AckedState>;
}

export class UiSession {
  clicks: ClickRecord[] = [];
  clickCount = 0;
  busy = false;
  mask: RleMask | null = null;
  iou: number | null = null;
  lastError: string | null = null;

  constructor(
    private readonly api: SessionApi,
    public readonly id: string,
    public readonly imageWidth: number,
    public readonly imageHeight: number,
  ) {}

  get canUndo(): boolean {
    return this.clicks.length > 0 && !this.busy;
  }

  get canReset(): boolean {
    return !this.busy;
  }

  /** Negative clicks are locally disabled until a positive one landed. */
  get negativeAllowed(): boolean {
    return this.clicks.length > 0;
  }

  async placeClick(
    row: number,
    col: number,
    positive: boolean,
  ): Promise<ActionResult> {
    if (this.busy) return "busy";
    if (!positive && this.clicks.length === 0) return "needs_positive";
    this.busy = true;
    this.lastError = null;
    try {
      const acked = await this.api.addClick(this.id, row, col, positive);
      this.clicks.push({ row, col, positive });
      this.syncAck(acked.payload, acked.clickCount);
      await this.refreshMask(acked.clickCount);
      return "ok";
    } catch (err) {
      this.recordError(err);
      return "rejected";
    } finally {
      this.busy = false;
    }
  }

  async undoClick(): Promise<ActionResult> {
    if (this.busy) return "busy";
    if (this.clicks.length === 0) return "nothing_to_undo";
    this.busy = true;
    this.lastError = null;
    try {
      const acked = await this.api.undo(this.id);
      this.clicks.length = Math.min(this.clicks.length, acked.payload.clicks);
      this.syncAck(acked.payload, acked.clickCount);
      if (acked.payload.clicks === 0) {
        this.mask = null;
      } else {
        await this.refreshMask(acked.clickCount);
      }
      return "ok";
    } catch (err) {
      this.recordError(err);
      return "rejected";
    } finally {
      this.busy = false;
    }
  }

  async resetSession(): Promise<ActionResult> {
    if (this.busy) return "busy";
    this.busy = true;
    this.lastError = null;
    try {
      const acked = await this.api.reset(this.id);
      this.clicks = [];
      this.mask = null;
      this.syncAck(acked.payload, acked.clickCount);
      return "ok";
    } catch (err) {
      this.recordError(err);
      return "rejected";
    } finally {
      this.busy = false;
    }
  }

  /** Apply a fetched mask only when it matches the current click count. */
  applyMask(mask: RleMask, clickCountTag: number): boolean {
    if (clickCountTag !== this.clickCount) return false;
    this.mask = mask;
    return true;
  }

  private async refreshMask(tag: number): Promise<void> {
    const mask = await this.api.getMask(this.id);
    this.applyMask(mask, tag);
  }

  private syncAck(payload: StatePayload, clickCount: number): void {
    this.clickCount = clickCount;
    this.iou = payload.iou ?? null;
    if (this.clicks.length !== payload.clicks) {
      // server is the source of truth; surface the divergence loudly
      this.lastError = `click list out of sync (local ${this.clicks.length}, server ${payload.clicks})`;
      this.clicks.length = Math.min(this.clicks.length, payload.clicks);
    }
  }

  private recordError(err: unknown): void {
    if (err instanceof ApiError) {
      this.lastError = `${err.code}: ${err.message}`;
    } else {
      this.lastError = err instanceof Error ? err.message : String(err);
    }
  }
}
