/** Browser view: renders into index.html and wires buttons plus L/R/S/U keys. */

import { CandidateView, Progress } from "./api.js";
import { SessionController, View } from "./controller.js";

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id);
  if (!el) {
    throw new Error(`missing element #${id}`);
  }
  return el as T;
}

export class DomView implements View {
  private readonly label = byId<HTMLHeadingElement>("candidate-label");
  private readonly meta = byId<HTMLParagraphElement>("candidate-meta");
  private readonly ancestors = byId<HTMLParagraphElement>("ancestors");
  private readonly children = byId<HTMLParagraphElement>("children");
  private readonly progressBar = byId<HTMLProgressElement>("progress-bar");
  private readonly progressText = byId<HTMLSpanElement>("progress-text");
  private readonly feedback = byId<HTMLParagraphElement>("feedback");
  private readonly errorBanner = byId<HTMLDivElement>("error-banner");
  private readonly candidatePane = byId<HTMLDivElement>("candidate-pane");
  private readonly donePane = byId<HTMLDivElement>("done-pane");
  private readonly exportLink = byId<HTMLAnchorElement>("export-link");
  private readonly buttons = Array.from(
    document.querySelectorAll<HTMLButtonElement>("button[data-action], #undo-button, #retry-button"),
  );

  showCandidate(candidate: CandidateView, progress: Progress): void {
    this.candidatePane.hidden = false;
    this.donePane.hidden = true;
    this.label.textContent = `${candidate.label} (${candidate.node_id})`;
    this.meta.textContent =
      `${candidate.kind} · ${candidate.descendant_count} descendant(s) · ` +
      `${candidate.event_count} linked event(s) · priority #${candidate.rank}`;
    this.ancestors.textContent = candidate.ancestors.length
      ? `up to root: ${candidate.ancestors.join(" → ")}`
      : "directly under the root";
    this.children.textContent = candidate.children.length
      ? `children: ${candidate.children.join(", ")}`
      : "no children";
    this.renderProgress(progress);
  }

  showDone(progress: Progress, exportUrl: string): void {
    this.candidatePane.hidden = true;
    this.donePane.hidden = false;
    this.exportLink.href = exportUrl;
    this.renderProgress(progress);
  }

  showBusy(busy: boolean): void {
    for (const button of this.buttons) {
      button.disabled = busy;
    }
  }

  showFeedback(message: string): void {
    this.feedback.textContent = message;
  }

  showError(message: string): void {
    this.errorBanner.hidden = false;
    byId<HTMLSpanElement>("error-text").textContent = message;
  }

  clearError(): void {
    this.errorBanner.hidden = true;
  }

  private renderProgress(progress: Progress): void {
    this.progressBar.max = progress.total;
    this.progressBar.value = progress.total - progress.remaining;
    this.progressText.textContent =
      `${progress.decided} decision(s) · ${progress.remaining} of ${progress.total} remaining`;
  }
}

const KEY_ACTIONS: Record<string, "select_leaf" | "reject" | "skip" | "undo"> = {
  l: "select_leaf",
  r: "reject",
  s: "skip",
  u: "undo",
};

export function wire(controller: SessionController): void {
  for (const button of document.querySelectorAll<HTMLButtonElement>("button[data-action]")) {
    button.addEventListener("click", () => {
      void controller.submit(button.dataset.action as "select_leaf" | "reject" | "skip");
    });
  }
  byId<HTMLButtonElement>("undo-button").addEventListener("click", () => {
    void controller.undo();
  });
  byId<HTMLButtonElement>("retry-button").addEventListener("click", () => {
    void controller.refresh();
  });
  document.addEventListener("keydown", (event) => {
    if (event.target instanceof HTMLInputElement) {
      return;
    }
    const action = KEY_ACTIONS[event.key.toLowerCase()];
    if (!action) {
      return;
    }
    if (action === "undo") {
      void controller.undo();
    } else {
      void controller.submit(action);
    }
  });
}
