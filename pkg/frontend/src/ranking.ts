/** compare_scenarios: submit a batch of drafts and rank them by cases
 * averted. A failed scenario becomes an error row; it never blocks the
 * others. Sorting is stable, so duplicate scenarios keep submission order.
 */

import type { ApiClient } from "./api.js";
import type { ScenarioDraft } from "./scenario.js";
import { draftToScenario } from "./scenario.js";

export interface RankedRow {
  name: string;
  submittedIndex: number;
  casesAverted: number;
  peakReduction: number;
  delayToPeak: number;
  pctChangeCumulative: number;
  error: null;
}

export interface ErrorRow {
  name: string;
  submittedIndex: number;
  error: string;
}

export type RankingRow = RankedRow | ErrorRow;

export async function compareScenarios(
  client: ApiClient,
  drafts: ScenarioDraft[],
): Promise<RankingRow[]> {
  if (drafts.length < 2) {
    throw new Error("ranking needs at least two scenarios");
  }
  const rows: RankingRow[] = await Promise.all(
    drafts.map(async (draft, idx): Promise<RankingRow> => {
      try {
        const res = await client.submitScenario(
          draft.baseModelId, draftToScenario(draft));
        return {
          name: draft.name,
          submittedIndex: idx,
          casesAverted: res.cases_averted,
          peakReduction: res.peak_reduction,
          delayToPeak: res.delay_to_peak,
          pctChangeCumulative: res.pct_change_cumulative,
          error: null,
        };
      } catch (exc) {
        return {
          name: draft.name,
          submittedIndex: idx,
          error: String(exc),
        };
      }
    }),
  );
  const ranked = rows.filter((r): r is RankedRow => r.error === null);
  const failed = rows.filter((r): r is ErrorRow => r.error !== null);
  // stable: ties and duplicates keep submission order
  ranked.sort((a, b) =>
    b.casesAverted - a.casesAverted || a.submittedIndex - b.submittedIndex);
  return [...ranked, ...failed];
}
