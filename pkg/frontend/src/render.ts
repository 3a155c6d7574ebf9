// HTML renderers: pure functions from the store snapshot to markup strings.
// Every number shown comes from the server response, unmodified.

import type { ConsoleState } from "./state.js";
import type { ClusterSummary, SampleDetail } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderBanner(state: ConsoleState): string {
  const banner = state.banner;
  if (!banner) return "";
  const refresh = banner.needsRefresh
    ? ' <button data-action="refresh">Refresh</button>'
    : "";
  const retry =
    state.phase === "unreachable"
      ? ' <button data-action="refresh">Retry</button>'
      : "";
  return `<div class="banner banner-${banner.kind}">${escapeHtml(banner.text)}${refresh}${retry}</div>`;
}

export function renderHeader(state: ConsoleState): string {
  if (state.revision === null) return `<header><h1>weldwatch console</h1></header>`;
  const chips = state.classLabels
    .map((label) => `<span class="chip">${escapeHtml(label)}</span>`)
    .join("");
  return (
    `<header><h1>weldwatch console</h1>` +
    `<div class="meta">revision <strong>${state.revision}</strong>` +
    ` &middot; flagged <strong>${state.flaggedTotal}</strong>` +
    ` &middot; staged <strong>${state.stagedTotal}</strong></div>` +
    `<div class="chips">${chips}</div>` +
    `<div class="actions"><button data-action="refresh">Refresh</button>` +
    `<button data-action="run-update">Re-run fine-tune</button></div></header>`
  );
}

export function similarityBars(values: number[] | null, labels: string[]): string {
  if (!values) return `<div class="bars bars-empty">no similarity data</div>`;
  const bars = values
    .map((value, i) => {
      const pct = Math.round(((value + 1) / 2) * 100); // [-1,1] -> [0,100]
      const name = labels[i] ?? `class ${i}`;
      return (
        `<div class="bar-row"><span class="bar-label">${escapeHtml(name)}</span>` +
        `<div class="bar"><div class="bar-fill" style="width:${pct}%"></div></div>` +
        `<span class="bar-value">${value.toFixed(3)}</span></div>`
      );
    })
    .join("");
  return `<div class="bars">${bars}</div>`;
}

function featurePreview(detail: SampleDetail | undefined): string {
  if (!detail?.features) return "";
  const head = detail.features.slice(0, 6).map((v) => v.toFixed(2));
  const ellipsis = detail.features.length > 6 ? ", &hellip;" : "";
  return `<div class="features">[${head.join(", ")}${ellipsis}]</div>`;
}

export function renderCluster(cluster: ClusterSummary, state: ConsoleState): string {
  const draft = state.drafts[cluster.cluster_id];
  const expanded = state.expanded[cluster.cluster_id] ?? false;
  const reps = cluster.representatives
    .map((sid) => {
      const member = cluster.members.find((m) => m.sample_id === sid);
      return (
        `<div class="rep-card" data-sample="${escapeHtml(sid)}">` +
        `<div class="rep-id">${escapeHtml(sid)}</div>` +
        featurePreview(state.sampleDetails[sid]) +
        similarityBars(member?.similarity ?? null, state.classLabels) +
        `</div>`
      );
    })
    .join("");

  const options = state.classLabels
    .map((label) => {
      const selected = draft && !draft.isNew && draft.label === label ? " selected" : "";
      return `<option value="${escapeHtml(label)}"${selected}>${escapeHtml(label)}</option>`;
    })
    .join("");
  const newValue = draft?.isNew ? draft.label : "";

  const memberRows = expanded
    ? cluster.members
        .map((m) => {
          const override = draft?.overrides[m.sample_id] ?? "";
          const dist = m.distance_to_centroid?.toFixed(3) ?? "-";
          return (
            `<tr><td>${escapeHtml(m.sample_id)}</td><td>${dist}</td>` +
            `<td><input class="override" data-cluster="${cluster.cluster_id}" ` +
            `data-sample="${escapeHtml(m.sample_id)}" value="${escapeHtml(override)}" ` +
            `placeholder="override label"/></td></tr>`
          );
        })
        .join("")
    : "";
  const memberTable = expanded
    ? `<table class="members"><thead><tr><th>sample</th><th>distance</th><th>override</th></tr></thead><tbody>${memberRows}</tbody></table>`
    : "";

  return (
    `<section class="cluster" data-cluster="${cluster.cluster_id}">` +
    `<h2>Cluster ${cluster.cluster_id} <span class="size">${cluster.size} samples</span>` +
    ` <span class="radius">radius ${cluster.radius.toFixed(3)}</span></h2>` +
    `<div class="profile">${similarityBars(cluster.similarity_profile, state.classLabels)}</div>` +
    `<div class="reps">${reps}</div>` +
    `<button data-action="toggle-members" data-cluster="${cluster.cluster_id}">` +
    (expanded ? "Hide members" : `Show all ${cluster.size} members`) +
    `</button>${memberTable}` +
    `<div class="draft">` +
    `<select class="draft-existing" data-cluster="${cluster.cluster_id}">` +
    `<option value="">label as existing class&hellip;</option>${options}</select>` +
    `<input class="draft-new" data-cluster="${cluster.cluster_id}" ` +
    `placeholder="or a new class name" value="${escapeHtml(newValue)}"/>` +
    (draft ? `<button data-action="clear-draft" data-cluster="${cluster.cluster_id}">Clear</button>` : "") +
    `</div></section>`
  );
}

export function renderClusters(state: ConsoleState): string {
  if (state.phase === "loading") return `<div class="empty">Loading&hellip;</div>`;
  if (state.clusters.length === 0) {
    return `<div class="empty">Nothing to label: the flagged pool is empty.</div>`;
  }
  // served sorted by the store: size descending
  return state.clusters.map((c) => renderCluster(c, state)).join("");
}

export function renderSubmitBar(state: ConsoleState): string {
  const count = Object.keys(state.drafts).length;
  const disabled = count === 0 || state.submitting ? " disabled" : "";
  const text = state.submitting ? "Submitting&hellip;" : `Submit ${count} label${count === 1 ? "" : "s"}`;
  return `<div class="submit-bar"><button data-action="submit"${disabled}>${text}</button></div>`;
}

export function renderApp(state: ConsoleState): string {
  return (
    renderHeader(state) +
    renderBanner(state) +
    `<main>${renderClusters(state)}</main>` +
    renderSubmitBar(state)
  );
}
