import { createApi, type ComparisonReport, type JobHandle } from "./api.js";
import { mountRunForm } from "./form.js";
import { el, renderComparisonTable, renderSourceList, renderTraceView } from "./render.js";
import { pollRun } from "./state.js";

// same-origin by default; ?api=http://127.0.0.1:8000 points elsewhere
const api = createApi(new URLSearchParams(window.location.search).get("api") ?? "");

function setStatus(text: string) {
  const status = document.getElementById("status")!;
  status.textContent = text;
}

function showReport(runId: string, report: ComparisonReport) {
  const results = document.getElementById("results")!;
  results.replaceChildren();
  results.appendChild(el("h2", {}, `run ${runId}`));
  results.appendChild(renderComparisonTable(report));

  const queries = el("div", { class: "queries" }, "traces: ");
  for (const queryId of report.query_ids) {
    const link = el("a", { href: "#", class: "query-link" }, queryId) as HTMLAnchorElement;
    link.addEventListener("click", async (event) => {
      event.preventDefault();
      try {
        const trace = await api.getTrace(runId, queryId);
        const holder = document.getElementById("trace")!;
        holder.replaceChildren(renderTraceView(trace));
      } catch (err) {
        setStatus(err instanceof Error ? err.message : String(err));
      }
    });
    queries.appendChild(link);
    queries.appendChild(el("span", {}, " "));
  }
  results.appendChild(queries);
}

async function onLaunched(handle: JobHandle) {
  setStatus(`run ${handle.id}: ${handle.state}`);
  try {
    const done = await pollRun(api, handle.id, (h) => {
      setStatus(`run ${h.id}: ${h.state} ${h.progress.completed}/${h.progress.total}`);
    });
    setStatus(`run ${done.id}: done`);
    showReport(done.id, await api.getReport(done.id));
  } catch (err) {
    setStatus(err instanceof Error ? err.message : String(err));
  }
}

async function refreshSources() {
  const holder = document.getElementById("sources")!;
  holder.replaceChildren(renderSourceList(await api.getSources()));
}

async function boot() {
  try {
    const presets = await api.getPresets();
    await refreshSources();
    mountRunForm(document.getElementById("form")!, api, presets, {
      onLaunched: (handle) => {
        void onLaunched(handle);
        void refreshSources();
      },
      onError: setStatus,
    });
  } catch (err) {
    setStatus(err instanceof Error ? err.message : String(err));
  }
}

window.addEventListener("DOMContentLoaded", () => void boot());
