// Turn-trace digestion for the stage inspector: which candidates entered,
// which survived each filter, and how the localizer scored them.

import type { TraceRecord } from "./types.js";

export interface CandidateView {
  id: number;
  box: [number, number, number, number];
  source: string;
  keptBy: Record<string, boolean>;
  score?: number;
  rationale?: string;
}

export interface StageView {
  stage: string;
  keptIds: number[];
  droppedIds: number[];
  note: string;
}

export interface TraceView {
  candidates: CandidateView[];
  stages: StageView[];
  outcome: string;
  winnerId: number | null;
}

export function digestTrace(trace: TraceRecord[]): TraceView {
  const candidates = new Map<number, CandidateView>();
  const stages: StageView[] = [];
  let outcome = "none";
  let winnerId: number | null = null;

  for (const record of trace) {
    if (record.stage === "collect") {
      const listed = (record.candidates as any[]) ?? [];
      for (const c of listed) {
        candidates.set(c.id, {
          id: c.id,
          box: c.box,
          source: c.source,
          keptBy: {},
        });
      }
      stages.push({
        stage: "collect",
        keptIds: listed.map((c) => c.id),
        droppedIds: [],
        note: `${record.raw_count ?? listed.length} raw candidates merged to ${listed.length}`,
      });
    } else if (record.stage === "filter_noisy" || record.stage === "spatial_filter") {
      const kept = (record.kept as number[]) ?? [];
      const dropped = (record.dropped as number[]) ?? [];
      for (const id of kept) {
        const view = candidates.get(id);
        if (view) view.keptBy[record.stage] = true;
      }
      for (const id of dropped) {
        const view = candidates.get(id);
        if (view) view.keptBy[record.stage] = false;
      }
      const note =
        record.stage === "spatial_filter"
          ? String(record.mode ?? "") + (record.passthrough ? " (passthrough)" : "")
          : record.floored
            ? "floored to one candidate"
            : "";
      stages.push({ stage: record.stage, keptIds: kept, droppedIds: dropped, note });
    } else if (record.stage === "localize") {
      outcome = String(record.outcome ?? "none");
      const scores = (record.scores as Record<string, number>) ?? {};
      const rationales = (record.rationales as Record<string, string>) ?? {};
      for (const [key, score] of Object.entries(scores)) {
        const view = candidates.get(Number(key));
        if (view) {
          view.score = score;
          view.rationale = rationales[key];
        }
      }
      if (outcome === "selected") winnerId = Number(record.winner);
      if (outcome === "fallback" && record.best_guess !== undefined) {
        winnerId = Number(record.best_guess);
      }
      stages.push({
        stage: "localize",
        keptIds: winnerId !== null ? [winnerId] : [],
        droppedIds: [],
        note: outcome,
      });
    }
  }
  return {
    candidates: [...candidates.values()].sort((a, b) => a.id - b.id),
    stages,
    outcome,
    winnerId,
  };
}

/** Candidates still alive after every filter stage recorded so far. */
export function survivors(view: TraceView): CandidateView[] {
  return view.candidates.filter((c) =>
    Object.values(c.keptBy).every((kept) => kept),
  );
}
