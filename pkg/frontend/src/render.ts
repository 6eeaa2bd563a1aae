import type {
  AttemptDetail,
  ComparisonReport,
  SourceInfo,
  SubqueryTrace,
  TracePayload,
} from "./api.js";

export function el(
  tag: string,
  props: Record<string, string> = {},
  text = ""
): HTMLElement {
  const node = document.createElement(tag);
  for (const key in props) {
    node.setAttribute(key, props[key]);
  }
  if (text) {
    node.textContent = text;
  }
  return node;
}

export function renderSourceList(sources: SourceInfo[]): HTMLElement {
  const list = el("ul", { class: "sources" });
  for (const source of sources) {
    const item = el("li");
    item.appendChild(el("span", { class: "tag" }, source.name));
    item.appendChild(
      el("span", {}, ` ${source.profile} (${source.document_count} docs)`)
    );
    list.appendChild(item);
  }
  return list;
}

/** Comparison table with the same columns and scaling as the CLI report. */
export function renderComparisonTable(report: ComparisonReport): HTMLElement {
  const table = el("table", { class: "comparison" });
  const head = el("tr");
  for (const label of ["Method", "EM", "F1", "Avg Tokens"]) {
    head.appendChild(el("th", {}, label));
  }
  table.appendChild(head);
  for (const arm of report.arms) {
    const row = el("tr");
    row.appendChild(el("td", {}, arm.name));
    row.appendChild(el("td", {}, (100 * arm.aggregates.mean_em).toFixed(2)));
    row.appendChild(el("td", {}, (100 * arm.aggregates.mean_f1).toFixed(2)));
    row.appendChild(el("td", {}, arm.aggregates.mean_prompt_tokens.toFixed(1)));
    table.appendChild(row);
  }
  return table;
}

function renderAttempt(detail: AttemptDetail): HTMLElement {
  const block = el("div", { class: "attempt" });
  const routing = detail.routing;
  let routingLine: string;
  if (routing === null) {
    routingLine = `attempt ${detail.attempt}: routing skipped`;
  } else if (routing.error !== null) {
    routingLine = `attempt ${detail.attempt}: routing failed (${routing.error})`;
  } else {
    routingLine = `attempt ${detail.attempt}: preferred=${routing.preferred_source}`;
  }
  block.appendChild(el("div", { class: "routing" }, routingLine));

  const evidence = el("ul", { class: "evidence" });
  for (const item of detail.evidence) {
    const row = el("li");
    row.appendChild(el("span", { class: "tag" }, item.source));
    row.appendChild(
      el(
        "span",
        {},
        ` ${item.id} score=${item.score.toFixed(4)} sel=${item.selection_score.toFixed(4)}`
      )
    );
    evidence.appendChild(row);
  }
  block.appendChild(evidence);
  for (const note of detail.notes) {
    block.appendChild(el("div", { class: "note" }, note));
  }
  return block;
}

function renderSubquery(subquery: SubqueryTrace): HTMLElement {
  const section = el("div", { class: "subquery" });
  const header = el("div", { class: "subquery-header" });
  header.appendChild(el("strong", {}, `subquery ${subquery.index}: `));
  header.appendChild(el("span", {}, subquery.bound_query));
  section.appendChild(header);

  for (const detail of subquery.attempts_detail) {
    section.appendChild(renderAttempt(detail));
  }

  const answer = el("div", { class: "answer" });
  answer.appendChild(el("span", {}, `answer: ${subquery.answer} `));
  answer.appendChild(el("span", { class: "attempts" }, `attempts: ${subquery.attempts}`));
  if (subquery.fallback) {
    answer.appendChild(el("span", { class: "fallback" }, "fallback"));
  }
  section.appendChild(answer);
  for (const note of subquery.notes) {
    section.appendChild(el("div", { class: "note" }, note));
  }
  return section;
}

/** Per-arm pipeline trace for one query, field for field from the API payload. */
export function renderTraceView(payload: TracePayload): HTMLElement {
  const view = el("div", { class: "trace" });
  view.appendChild(el("h3", {}, `trace for ${payload.query_id}`));
  for (const record of payload.records) {
    const section = el("section", { class: "trace-arm" });
    section.appendChild(el("h4", {}, record.arm));
    section.appendChild(el("div", { class: "question" }, record.question));
    for (const subquery of record.subqueries) {
      section.appendChild(renderSubquery(subquery));
    }
    section.appendChild(
      el("div", { class: "final" }, `final answer: ${record.final_answer}`)
    );
    for (const note of record.notes) {
      section.appendChild(el("div", { class: "note" }, note));
    }
    view.appendChild(section);
  }
  return view;
}
