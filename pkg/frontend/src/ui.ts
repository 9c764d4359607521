/** DOM rendering for the what-if explorer: model picker, scenario editor,
 * comparison chart with CI band, metric cards, decomposition panel, and the
 * scenario ranking table. Hand-rolled SVG keeps the dependency surface at
 * zero; the service remains the single source of truth for every number.
 */

import { ApiClient, ServiceUnreachableError } from "./api.js";
import type { ComparisonView } from "./comparison.js";
import { attachCi, buildComparisonView } from "./comparison.js";
import type { RankingRow } from "./ranking.js";
import { compareScenarios } from "./ranking.js";
import type { ScenarioDraft } from "./scenario.js";
import {
  ScenarioValidationError,
  draftToScenario,
  exportScenario,
  importScenario,
  neutralDraft,
  validateDraft,
} from "./scenario.js";
import type { FactualResponse, ModelInfo } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const CHART_W = 640;
const CHART_H = 260;
const PAD = 36;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

function pathFor(values: number[], yMax: number): string {
  const step = (CHART_W - 2 * PAD) / Math.max(1, values.length - 1);
  return values
    .map((v, k) => {
      const x = PAD + k * step;
      const y = CHART_H - PAD - (v / yMax) * (CHART_H - 2 * PAD);
      return `${k === 0 ? "M" : "L"}${x.toFixed(1)},${y.toFixed(1)}`;
    })
    .join(" ");
}

export function renderChart(view: ComparisonView): SVGSVGElement {
  const svg = document.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${CHART_W} ${CHART_H}`);
  svg.setAttribute("class", "comparison-chart");
  const yMax = Math.max(
    ...view.factual,
    ...view.counterfactual,
    ...(view.ciBand ? view.ciBand[1] : [0]),
    1,
  );
  if (view.ciBand) {
    const [lo, hi] = view.ciBand;
    const band = document.createElementNS(SVG_NS, "path");
    const down = pathFor(hi, yMax);
    const up = pathFor([...lo].reverse(), yMax)
      .replace(/^M/, "L");
    band.setAttribute("d", `${down} ${up} Z`);
    band.setAttribute("class", "ci-band");
    svg.appendChild(band);
  }
  for (const [cls, series] of [
    ["factual", view.factual],
    ["counterfactual", view.counterfactual],
  ] as const) {
    const path = document.createElementNS(SVG_NS, "path");
    path.setAttribute("d", pathFor(series, yMax));
    path.setAttribute("class", `series-${cls}`);
    path.setAttribute("fill", "none");
    svg.appendChild(path);
  }
  return svg;
}

export function renderMetricCards(view: ComparisonView): HTMLElement {
  const wrap = el("div", "metric-cards");
  const cards: [string, string][] = [
    ["cases averted", view.cards.casesAverted.toFixed(1)],
    ["peak reduction", (view.cards.peakReduction * 100).toFixed(1) + "%"],
    ["delay to peak", `${view.cards.delayToPeak} d`],
    ["change in cumulative cases",
     view.cards.pctChangeCumulative.toFixed(1) + "%"],
  ];
  for (const [label, value] of cards) {
    const card = el("div", "metric-card");
    card.appendChild(el("div", "metric-label", label));
    card.appendChild(el("div", "metric-value", value));
    wrap.appendChild(card);
  }
  if (!view.consistent) {
    wrap.appendChild(
      el("div", "banner banner-warn",
         "client cross-check disagrees with server metrics"));
  }
  return wrap;
}

export function renderDecomposition(view: ComparisonView): HTMLElement {
  const wrap = el("div", "decomposition");
  wrap.appendChild(el("h3", undefined, "multiplier decomposition"));
  const series: [string, number[]][] = [
    ["policy", view.decomposition.mPolicy],
    ["media", view.decomposition.mMedia],
    ["compliance multiplier", view.decomposition.mComp],
    ["compliance level", view.decomposition.compliance],
  ];
  for (const [label, values] of series) {
    const row = el("div", "decomposition-row");
    row.appendChild(el("span", "decomposition-label", label));
    const svg = document.createElementNS(SVG_NS, "svg");
    svg.setAttribute("viewBox", `0 0 ${CHART_W} 60`);
    const path = document.createElementNS(SVG_NS, "path");
    const yMax = Math.max(...values, 1);
    path.setAttribute(
      "d",
      values
        .map((v, k) => {
          const x = PAD +
            (k * (CHART_W - 2 * PAD)) / Math.max(1, values.length - 1);
          const y = 55 - (v / yMax) * 50;
          return `${k === 0 ? "M" : "L"}${x.toFixed(1)},${y.toFixed(1)}`;
        })
        .join(" "),
    );
    path.setAttribute("fill", "none");
    path.setAttribute("class", "series-decomposition");
    svg.appendChild(path);
    row.appendChild(svg);
    wrap.appendChild(row);
  }
  return wrap;
}

export function renderComparison(view: ComparisonView): HTMLElement {
  const wrap = el("section", "comparison-view");
  wrap.appendChild(el("h2", undefined, `scenario: ${view.scenario}`));
  wrap.appendChild(renderChart(view));
  wrap.appendChild(renderMetricCards(view));
  wrap.appendChild(renderDecomposition(view));
  return wrap;
}

export function renderRankingTable(rows: RankingRow[]): HTMLElement {
  const table = el("table", "ranking-table");
  const head = el("tr");
  for (const col of ["#", "scenario", "cases averted", "peak reduction",
                     "delay", "% change"]) {
    head.appendChild(el("th", undefined, col));
  }
  table.appendChild(head);
  rows.forEach((row, rank) => {
    const tr = el("tr", row.error === null ? "ranked-row" : "error-row");
    tr.appendChild(el("td", undefined, String(rank + 1)));
    tr.appendChild(el("td", undefined, row.name));
    if (row.error === null) {
      tr.appendChild(el("td", undefined, row.casesAverted.toFixed(1)));
      tr.appendChild(
        el("td", undefined, (row.peakReduction * 100).toFixed(1) + "%"));
      tr.appendChild(el("td", undefined, `${row.delayToPeak} d`));
      tr.appendChild(
        el("td", undefined, row.pctChangeCumulative.toFixed(1) + "%"));
    } else {
      const td = el("td", undefined, row.error);
      td.colSpan = 4;
      tr.appendChild(td);
    }
    table.appendChild(tr);
  });
  return table;
}

interface AppState {
  client: ApiClient;
  models: ModelInfo[];
  selected: ModelInfo | null;
  factual: FactualResponse | null;
  draft: ScenarioDraft | null;
  pollTimer: ReturnType<typeof setTimeout> | null;
}

export function createApp(root: HTMLElement, client: ApiClient): AppState {
  const state: AppState = {
    client, models: [], selected: null, factual: null, draft: null,
    pollTimer: null,
  };
  const banner = el("div", "banner");
  const picker = el("select", "model-picker");
  const editor = el("div", "scenario-editor");
  const output = el("div", "comparison-output");
  const rankingOut = el("div", "ranking-output");
  root.append(banner, picker, editor, output, rankingOut);

  async function loadModels() {
    try {
      state.models = await client.fetchModels();
      banner.textContent = state.models.length
        ? ""
        : "no models loaded; start the service with epiloop serve --model ...";
      picker.replaceChildren(
        ...state.models.map((m) => {
          const opt = document.createElement("option");
          opt.value = m.id;
          opt.textContent =
            `${m.id} (${m.dataset.days} days, N=${m.dataset.population})`;
          return opt;
        }),
      );
      if (state.models.length) {
        await selectModel(state.models[0]!);
      }
    } catch (exc) {
      banner.className = "banner banner-error";
      banner.textContent = exc instanceof ServiceUnreachableError
        ? `${exc.message}; retry when the service is up`
        : `schema error: ${exc}`;
    }
  }

  async function selectModel(model: ModelInfo) {
    state.selected = model;
    state.factual = await client.fetchFactual(model.id);
    state.draft = neutralDraft(model.id, model.dataset.events);
    renderEditor();
  }

  function renderEditor() {
    const draft = state.draft;
    if (!draft || !state.selected) return;
    editor.replaceChildren(el("h2", undefined, "policy edits"));
    draft.edits.forEach((edit, idx) => {
      const row = el("div", "edit-row");
      row.appendChild(el("span", "edit-event", edit.event));
      const enabled = el("input") as HTMLInputElement;
      enabled.type = "checkbox";
      enabled.checked = edit.enabled;
      enabled.addEventListener("change", () => {
        edit.enabled = enabled.checked;
      });
      const shift = el("input") as HTMLInputElement;
      shift.type = "number";
      shift.step = "1";
      shift.value = String(edit.shiftDays);
      shift.addEventListener("change", () => {
        edit.shiftDays = Number(shift.value);
      });
      const scale = el("input") as HTMLInputElement;
      scale.type = "number";
      scale.step = "0.05";
      scale.value = String(edit.scale);
      scale.addEventListener("change", () => {
        edit.scale = Number(scale.value);
      });
      const err = el("span", "edit-error");
      err.dataset["editIndex"] = String(idx);
      row.append(enabled, shift, scale, err);
      editor.appendChild(row);
    });
    const run = el("button", "run-button", "evaluate scenario");
    run.addEventListener("click", () => void submit());
    const exportBtn = el("button", "export-button", "export scenario");
    exportBtn.addEventListener("click", () => {
      if (state.draft) downloadScenario(state.draft);
    });
    editor.append(run, exportBtn);
  }

  async function submit() {
    const draft = state.draft;
    const model = state.selected;
    const factual = state.factual;
    if (!draft || !model || !factual) return;
    editor.querySelectorAll(".edit-error").forEach((n) => {
      n.textContent = "";
    });
    try {
      validateDraft(draft, model.dataset.events);
    } catch (exc) {
      if (exc instanceof ScenarioValidationError && exc.editIndex !== null) {
        const slot = editor.querySelector(
          `.edit-error[data-edit-index="${exc.editIndex}"]`);
        if (slot) slot.textContent = exc.message;
        return;
      }
      throw exc;
    }
    const scenario = draftToScenario(draft);
    const res = await client.submitScenario(model.id, scenario);
    let view = buildComparisonView(factual, res);
    output.replaceChildren(renderComparison(view));
    // progressive CI: point estimate is already on screen, band follows
    if (state.pollTimer !== null) clearTimeout(state.pollTimer);
    const jobId = await client.requestCi(model.id, scenario);
    const poll = async () => {
      const job = await client.pollJob(jobId);
      if (job.status === "pending") {
        state.pollTimer = setTimeout(() => void poll(), 1000);
      } else if (job.status === "done" && job.result) {
        view = attachCi(view, job.result);
        output.replaceChildren(renderComparison(view));
      }
    };
    state.pollTimer = setTimeout(() => void poll(), 1000);
  }

  void loadModels();
  return state;
}

function downloadScenario(draft: ScenarioDraft) {
  const text = exportScenario(draftToScenario(draft));
  const blob = new Blob([text], { type: "application/json" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = `${draft.name}.json`;
  a.click();
  URL.revokeObjectURL(a.href);
}

export async function runRanking(
  root: HTMLElement,
  client: ApiClient,
  drafts: ScenarioDraft[],
): Promise<RankingRow[]> {
  const rows = await compareScenarios(client, drafts);
  root.replaceChildren(renderRankingTable(rows));
  return rows;
}

export { exportScenario, importScenario };
