// Bootstrap: wire the store to the DOM with event delegation. All reads go
// through GET endpoints; the only mutations are POST /labels and /update.

import { MonitorApi } from "./api.js";
import { renderApp } from "./render.js";
import { ConsoleStore } from "./state.js";

const api = new MonitorApi("");
const store = new ConsoleStore(api);
const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");

store.subscribe((state) => {
  root.innerHTML = renderApp(state);
});

root.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const action = target.dataset.action;
  if (!action) return;
  if (action === "refresh") void store.refresh();
  if (action === "submit") void store.submit();
  if (action === "run-update") void store.runUpdate();
  if (action === "toggle-members") {
    store.toggleExpanded(Number(target.dataset.cluster));
  }
  if (action === "clear-draft") {
    store.clearDraft(Number(target.dataset.cluster));
  }
});

root.addEventListener("change", (event) => {
  const target = event.target as HTMLInputElement | HTMLSelectElement;
  const clusterId = Number(target.dataset.cluster);
  if (Number.isNaN(clusterId)) return;
  if (target.classList.contains("draft-existing") && target.value !== "") {
    store.setDraftLabel(clusterId, target.value, false);
  } else if (target.classList.contains("draft-new")) {
    if (target.value.trim() === "") store.clearDraft(clusterId);
    else store.setDraftLabel(clusterId, target.value, true);
  } else if (target.classList.contains("override")) {
    const sample = (target as HTMLInputElement).dataset.sample;
    if (sample) store.setOverride(clusterId, sample, target.value);
  }
});

void store.refresh();
