/**
 * Session state machine, independent of the DOM so it can be tested headless.
 *
 * One decision may be in flight at a time: while a request is pending all
 * further submits are ignored, so rapid double-clicks produce exactly one
 * decision. A 409 from the server (someone else decided the candidate first)
 * refetches instead of resubmitting.
 */

import {
  Action,
  ApiError,
  CandidateView,
  Progress,
  SessionApi,
  StaleCandidateError,
} from "./api.js";

export interface View {
  showCandidate(candidate: CandidateView, progress: Progress): void;
  showDone(progress: Progress, exportUrl: string): void;
  showBusy(busy: boolean): void;
  showFeedback(message: string): void;
  showError(message: string): void;
  clearError(): void;
}

export class SessionController {
  private current: CandidateView | null = null;
  private inFlight = false;

  constructor(private readonly api: SessionApi, private readonly view: View) {}

  get currentCandidate(): CandidateView | null {
    return this.current;
  }

  get busy(): boolean {
    return this.inFlight;
  }

  async start(): Promise<void> {
    await this.refresh();
  }

  /** Fetch progress plus the next candidate and render whichever applies. */
  async refresh(): Promise<void> {
    try {
      const progress = await this.api.progress();
      const next = await this.api.next();
      this.view.clearError();
      if (next.done) {
        this.current = null;
        this.view.showDone(progress, this.api.exportUrl);
      } else {
        this.current = next;
        this.view.showCandidate(next, progress);
      }
    } catch (err) {
      this.view.showError(describe(err));
    }
  }

  /**
   * Decide the candidate on screen. Returns true when a decision was
   * actually submitted and accepted.
   */
  async submit(action: Action): Promise<boolean> {
    if (this.current === null || this.inFlight) {
      return false;
    }
    const nodeId = this.current.node_id;
    this.inFlight = true;
    this.view.showBusy(true);
    try {
      const summary = await this.api.decide(nodeId, action);
      this.view.showFeedback(
        `${action} ${nodeId}: removed ${summary.removed_candidates.length} candidate(s)`,
      );
      await this.refresh();
      return true;
    } catch (err) {
      if (err instanceof StaleCandidateError) {
        // decided elsewhere; catch up without submitting twice
        await this.refresh();
        return false;
      }
      this.view.showError(describe(err));
      return false;
    } finally {
      this.inFlight = false;
      this.view.showBusy(false);
    }
  }

  async undo(): Promise<boolean> {
    if (this.inFlight) {
      return false;
    }
    this.inFlight = true;
    this.view.showBusy(true);
    try {
      const undone = await this.api.undo();
      this.view.showFeedback(`undid ${undone.action} on ${undone.undone}`);
      await this.refresh();
      return true;
    } catch (err) {
      this.view.showError(describe(err));
      return false;
    } finally {
      this.inFlight = false;
      this.view.showBusy(false);
    }
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return err.message;
  }
  if (err instanceof Error) {
    return `cannot reach the session service (${err.message})`;
  }
  return String(err);
}
