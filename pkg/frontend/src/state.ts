// Console store: server snapshot, label drafts, and the submission
// lifecycle. Pure TypeScript so every transition is unit-testable; rendering
// subscribes and redraws from the snapshot.
//
// Submission rules:
//   - a draft is never submitted empty; new-class names are validated
//     against the existing label list before anything is sent
//   - one POST per submission, carrying an idempotency token that is kept
//     through retries (a retry can never cause a second model update)
//   - on failure the drafts stay intact and the server diagnostic is shown
//   - a stale-revision rejection prompts a refresh instead of a retry

import { ApiError, MonitorApi } from "./api.js";
import type {
  ClusterSummary,
  LabelAssignmentBody,
  SampleDetail,
  StateInfo,
} from "./types.js";

export interface Draft {
  label: string;
  isNew: boolean;
  overrides: Record<string, string>;
}

export interface Banner {
  kind: "error" | "success" | "info";
  text: string;
  needsRefresh?: boolean;
}

export type Phase = "loading" | "ready" | "unreachable";

export interface ConsoleState {
  phase: Phase;
  revision: number | null;
  classLabels: string[];
  flaggedTotal: number;
  stagedTotal: number;
  clusters: ClusterSummary[];
  sampleDetails: Record<string, SampleDetail>;
  drafts: Record<number, Draft>;
  expanded: Record<number, boolean>;
  banner: Banner | null;
  submitting: boolean;
}

export function newToken(): string {
  const c = globalThis.crypto as { randomUUID?: () => string } | undefined;
  if (c?.randomUUID) return c.randomUUID();
  return `tok-${Date.now()}-${Math.random().toString(36).slice(2)}`;
}

export class ConsoleStore {
  private state: ConsoleState = {
    phase: "loading",
    revision: null,
    classLabels: [],
    flaggedTotal: 0,
    stagedTotal: 0,
    clusters: [],
    sampleDetails: {},
    drafts: {},
    expanded: {},
    banner: null,
    submitting: false,
  };
  private pendingToken: string | null = null;
  private listeners: Array<(s: ConsoleState) => void> = [];

  constructor(
    private readonly api: MonitorApi,
    private readonly makeToken: () => string = newToken,
  ) {}

  get snapshot(): ConsoleState {
    return this.state;
  }

  subscribe(listener: (s: ConsoleState) => void): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private set(partial: Partial<ConsoleState>): void {
    this.state = { ...this.state, ...partial };
    for (const listener of this.listeners) listener(this.state);
  }

  /** Load (or reload) the server snapshot. Nothing stale is shown as fresh:
   * on failure the phase flips to "unreachable" with a retry banner. */
  async refresh(): Promise<void> {
    this.set({ phase: this.state.revision === null ? "loading" : this.state.phase });
    let info: StateInfo;
    try {
      info = await this.api.getState();
    } catch (err) {
      this.set({
        phase: "unreachable",
        banner: { kind: "error", text: `Cannot reach the monitor service: ${msg(err)}` },
      });
      return;
    }
    try {
      const clusters = await this.api.getClusters();
      const sorted = [...clusters.clusters].sort((a, b) => b.size - a.size);
      const details: Record<string, SampleDetail> = {};
      for (const cluster of sorted) {
        for (const sid of cluster.representatives) {
          try {
            details[sid] = await this.api.getSample(sid);
          } catch {
            // feature preview is optional; the card still renders
          }
        }
      }
      this.set({
        phase: "ready",
        revision: clusters.revision,
        classLabels: clusters.class_labels,
        flaggedTotal: clusters.flagged_total,
        stagedTotal: info.counts.staged,
        clusters: sorted,
        sampleDetails: details,
        banner: this.state.banner?.kind === "error" ? null : this.state.banner,
      });
    } catch (err) {
      this.set({
        phase: "unreachable",
        banner: { kind: "error", text: `Cluster listing failed: ${msg(err)}` },
      });
    }
  }

  setDraftLabel(clusterId: number, label: string, isNew: boolean): void {
    const drafts = { ...this.state.drafts };
    const existing = drafts[clusterId];
    drafts[clusterId] = { label, isNew, overrides: existing?.overrides ?? {} };
    this.set({ drafts });
  }

  clearDraft(clusterId: number): void {
    const drafts = { ...this.state.drafts };
    delete drafts[clusterId];
    this.set({ drafts });
  }

  setOverride(clusterId: number, sampleId: string, label: string): void {
    const draft = this.state.drafts[clusterId];
    if (!draft) return;
    const overrides = { ...draft.overrides };
    if (label.trim() === "") delete overrides[sampleId];
    else overrides[sampleId] = label;
    this.set({
      drafts: { ...this.state.drafts, [clusterId]: { ...draft, overrides } },
    });
  }

  toggleExpanded(clusterId: number): void {
    this.set({
      expanded: {
        ...this.state.expanded,
        [clusterId]: !this.state.expanded[clusterId],
      },
    });
  }

  /** Client-side validation before anything is sent. */
  validateDrafts(): string[] {
    const errors: string[] = [];
    const entries = Object.entries(this.state.drafts);
    if (entries.length === 0) {
      errors.push("nothing to submit: no cluster has a label draft");
      return errors;
    }
    for (const [clusterId, draft] of entries) {
      const label = draft.label.trim();
      if (label === "") {
        errors.push(`cluster ${clusterId}: label is empty`);
        continue;
      }
      const exists = this.state.classLabels.includes(label);
      if (draft.isNew && exists) {
        errors.push(
          `cluster ${clusterId}: "${label}" already exists; pick it from the class list instead`,
        );
      }
      if (!draft.isNew && !exists) {
        errors.push(`cluster ${clusterId}: "${label}" is not an existing class`);
      }
      for (const [sid, override] of Object.entries(draft.overrides)) {
        if (override.trim() === "") {
          errors.push(`cluster ${clusterId}: override for ${sid} is empty`);
        }
      }
    }
    return errors;
  }

  buildAssignments(): LabelAssignmentBody[] {
    return Object.entries(this.state.drafts).map(([clusterId, draft]) => ({
      cluster_id: Number(clusterId),
      label: draft.label.trim(),
      overrides: draft.overrides,
    }));
  }

  /** One POST per submission. The token survives retries of the same
   * submission; it is regenerated only after success or a stale rejection. */
  async submit(): Promise<void> {
    const errors = this.validateDrafts();
    if (errors.length > 0) {
      this.set({ banner: { kind: "error", text: errors.join("; ") } });
      return;
    }
    if (this.pendingToken === null) this.pendingToken = this.makeToken();
    const token = this.pendingToken;
    this.set({ submitting: true, banner: null });
    try {
      const response = await this.api.submitLabels(
        this.buildAssignments(),
        token,
        this.state.revision,
      );
      this.pendingToken = null;
      this.set({
        submitting: false,
        drafts: {},
        banner: {
          kind: "success",
          text: `Revision ${response.revision}: classes [${response.class_labels.join(", ")}], ${response.flagged_total} still flagged`,
        },
      });
      await this.refresh();
    } catch (err) {
      if (err instanceof ApiError && err.isConflict) {
        this.pendingToken = null; // recompose against the fresh revision
        this.set({
          submitting: false,
          banner: {
            kind: "error",
            text: `Submission rejected as stale: ${err.message}`,
            needsRefresh: true,
          },
        });
        return;
      }
      // drafts stay intact; the token stays valid for an idempotent retry
      this.set({
        submitting: false,
        banner: { kind: "error", text: `Submission failed: ${msg(err)}` },
      });
    }
  }

  async runUpdate(): Promise<void> {
    const token = this.makeToken();
    this.set({ submitting: true, banner: null });
    try {
      const response = await this.api.triggerUpdate(token);
      this.set({
        submitting: false,
        banner: { kind: "success", text: `Update complete at revision ${response.revision}` },
      });
      await this.refresh();
    } catch (err) {
      this.set({
        submitting: false,
        banner: { kind: "error", text: `Update failed: ${msg(err)}` },
      });
    }
  }

  /** Exposed for tests: the token of the in-flight/retryable submission. */
  get currentToken(): string | null {
    return this.pendingToken;
  }
}

function msg(err: unknown): string {
  return err instanceof Error ? err.message : String(err);
}
