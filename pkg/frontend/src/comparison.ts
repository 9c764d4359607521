/** ComparisonView: factual vs counterfactual series, metric cards, CI band
 * and the multiplier decomposition panel. Metric cards always show the
 * server's numbers; a client-side recomputation from the plotted series is
 * kept as a consistency cross-check only.
 */

import type {
  CiJobResult,
  CounterfactualResponse,
  FactualResponse,
} from "./types.js";

export interface MetricCards {
  casesAverted: number;
  peakReduction: number;
  delayToPeak: number;
  pctChangeCumulative: number;
}

export interface DecompositionPanel {
  mPolicy: number[];
  mMedia: number[];
  mComp: number[];
  compliance: number[];
}

export interface ComparisonView {
  scenario: string;
  dates: string[];
  factual: number[];
  counterfactual: number[];
  ciBand: [number[], number[]] | null;
  ci: Record<string, [number, number]> | null;
  cards: MetricCards;
  decomposition: DecompositionPanel;
  /** true when the client-side recomputation agrees with the cards */
  consistent: boolean;
}

/** Recompute the metric cards from the plotted series. */
export function crossCheckCards(
  factual: number[],
  counterfactual: number[],
): MetricCards {
  if (factual.length !== counterfactual.length) {
    throw new Error(
      `series lengths differ: ${factual.length} vs ${counterfactual.length}`);
  }
  const sum = (xs: number[]) => xs.reduce((a, b) => a + b, 0);
  const peak = Math.max(...factual);
  const argmax = (xs: number[]) => xs.indexOf(Math.max(...xs));
  const factualSum = sum(factual);
  return {
    casesAverted: sum(factual) - sum(counterfactual),
    peakReduction: (peak - Math.max(...counterfactual)) / peak,
    delayToPeak: argmax(counterfactual) - argmax(factual),
    pctChangeCumulative:
      ((sum(counterfactual) - factualSum) / factualSum) * 100,
  };
}

const CARD_TOL = 1e-6;

export function buildComparisonView(
  factual: FactualResponse,
  cf: CounterfactualResponse,
): ComparisonView {
  if (cf.factual.length !== cf.cf_trajectory.length) {
    throw new Error("factual and counterfactual series lengths differ");
  }
  const cards: MetricCards = {
    casesAverted: cf.cases_averted,
    peakReduction: cf.peak_reduction,
    delayToPeak: cf.delay_to_peak,
    pctChangeCumulative: cf.pct_change_cumulative,
  };
  const check = crossCheckCards(cf.factual, cf.cf_trajectory);
  const consistent =
    Math.abs(check.casesAverted - cards.casesAverted) <= CARD_TOL &&
    Math.abs(check.peakReduction - cards.peakReduction) <= CARD_TOL &&
    check.delayToPeak === cards.delayToPeak &&
    Math.abs(check.pctChangeCumulative - cards.pctChangeCumulative) <=
      CARD_TOL;
  return {
    scenario: cf.scenario,
    dates: factual.dates.slice(0, cf.factual.length),
    factual: cf.factual,
    counterfactual: cf.cf_trajectory,
    ciBand: cf.ci_bands === null || cf.ci_bands === undefined
      ? null
      : [cf.ci_bands[0] ?? [], cf.ci_bands[1] ?? []],
    ci: cf.ci ?? null,
    cards,
    decomposition: {
      mPolicy: factual.m_policy,
      mMedia: factual.m_media,
      mComp: factual.m_comp,
      compliance: factual.compliance,
    },
    consistent,
  };
}

/** Overlay a finished CI job onto an existing view (progressive render). */
export function attachCi(
  view: ComparisonView,
  job: CiJobResult,
): ComparisonView {
  return {
    ...view,
    ci: job.ci,
    ciBand: [job.ci_bands[0] ?? [], job.ci_bands[1] ?? []],
  };
}
