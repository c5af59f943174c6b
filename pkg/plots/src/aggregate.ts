/**
 * Seed aggregation: every figure shows the mean across seeds with a min/max
 * band (seed counts are small, so extremes are more honest than a std band).
 */

import { ResultRow } from "./schema";

export interface Band {
  x: number;
  mean: number;
  min: number;
  max: number;
}

export function mean(values: number[]): number {
  return values.reduce((a, b) => a + b, 0) / values.length;
}

function finite(values: number[]): number[] {
  return values.filter((v) => Number.isFinite(v));
}

/** Metric shown on the y axis: clustering accuracy when the run recorded it
 * (synthetic tasks), classification accuracy otherwise, else validation loss. */
export function pickMetric(rows: ResultRow[]): keyof ResultRow {
  if (rows.some((r) => Number.isFinite(r.clustering_accuracy))) return "clustering_accuracy";
  if (rows.some((r) => Number.isFinite(r.val_accuracy))) return "val_accuracy";
  return "val_loss";
}

/** Group rows by a key, then collapse each x bucket across seeds. */
export function bandsBy(
  rows: ResultRow[],
  keyOf: (r: ResultRow) => string,
  xOf: (r: ResultRow) => number,
  yOf: (r: ResultRow) => number
): Map<string, Band[]> {
  const groups = new Map<string, Map<number, number[]>>();
  for (const row of rows) {
    const y = yOf(row);
    if (!Number.isFinite(y)) continue;
    const key = keyOf(row);
    const x = xOf(row);
    if (!groups.has(key)) groups.set(key, new Map());
    const buckets = groups.get(key)!;
    if (!buckets.has(x)) buckets.set(x, []);
    buckets.get(x)!.push(y);
  }
  const out = new Map<string, Band[]>();
  for (const [key, buckets] of [...groups.entries()].sort()) {
    const bands = [...buckets.entries()]
      .sort((a, b) => a[0] - b[0])
      .map(([x, ys]) => ({
        x,
        mean: mean(ys),
        min: Math.min(...ys),
        max: Math.max(...ys),
      }));
    out.set(key, bands);
  }
  return out;
}

/** Rows belonging to each run's final evaluation round. */
export function finalRound(rows: ResultRow[], keyOf: (r: ResultRow) => string): ResultRow[] {
  const last = new Map<string, number>();
  for (const row of rows) {
    const key = keyOf(row);
    last.set(key, Math.max(last.get(key) ?? -Infinity, row.round));
  }
  return rows.filter((r) => r.round === last.get(keyOf(r)));
}

export { finite };
