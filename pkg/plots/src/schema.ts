/**
 * Data contracts: the results CSV schema written by the simulator CLI, the
 * per-client dataset CSV, the run sidecar JSON, and the PlotSpec driving a
 * render.
 */

export const RESULT_COLUMNS = [
  "seed",
  "round",
  "method",
  "B",
  "eps_dp",
  "sigma_theta",
  "sigma_s",
  "train_loss",
  "val_loss",
  "val_accuracy",
  "clustering_accuracy",
  "min_group_size",
  "max_group_size",
  "donors_this_round",
  "collapsed_clusters",
] as const;

export type ResultColumn = (typeof RESULT_COLUMNS)[number];

export interface ResultRow {
  seed: number;
  round: number;
  method: string;
  B: number;
  eps_dp: number;
  sigma_theta: number;
  sigma_s: number;
  train_loss: number;
  val_loss: number;
  val_accuracy: number;
  clustering_accuracy: number;
  min_group_size: number;
  max_group_size: number;
  donors_this_round: number;
  collapsed_clusters: number;
}

/** One sample row of the per-client dataset CSV. */
export interface DataPoint {
  clientId: number;
  x: number;
  y: number;
  trueCluster: number | null;
}

/** Sidecar written next to each results CSV. */
export interface Sidecar {
  config: Record<string, unknown>;
  points: Array<{
    b_min: number;
    target_eps: number | null;
    sigma_theta: number;
    sigma_s: number;
    eps_dp: number | null;
    best_alpha: number | null;
    final_models: Record<string, number[][]>;
  }>;
  csv_columns: string[];
}

export const FIGURE_KINDS = [
  "convergence",
  "b_sweep",
  "eps_sweep",
  "synthetic_lines",
] as const;

export type FigureKind = (typeof FIGURE_KINDS)[number];

export interface PlotSpec {
  kind: FigureKind;
  /** results CSVs for the sweep/convergence kinds; the dataset CSV for synthetic_lines */
  csv: string[];
  /** columns that define one curve/series (convergence only; default ["method"]) */
  groupBy: string[];
  out: string;
  /** sidecar JSON path, required by synthetic_lines for the fitted lines */
  sidecar?: string;
}

export class SpecError extends Error {}

function asStringArray(value: unknown, where: string): string[] {
  if (!Array.isArray(value) || value.some((v) => typeof v !== "string")) {
    throw new SpecError(`${where} must be an array of strings`);
  }
  return value as string[];
}

/** Validate a raw JSON object into a PlotSpec; unknown keys are rejected. */
export function parsePlotSpec(raw: unknown): PlotSpec {
  if (typeof raw !== "object" || raw === null || Array.isArray(raw)) {
    throw new SpecError("plot spec must be a JSON object");
  }
  const obj = { ...(raw as Record<string, unknown>) };
  const kind = obj.kind;
  delete obj.kind;
  if (typeof kind !== "string" || !(FIGURE_KINDS as readonly string[]).includes(kind)) {
    throw new SpecError(`kind must be one of ${FIGURE_KINDS.join(", ")}`);
  }
  const csv = asStringArray(obj.csv ?? [], "csv");
  delete obj.csv;
  if (csv.length === 0) throw new SpecError("csv must list at least one file");
  const groupBy =
    obj.group_by === undefined ? ["method"] : asStringArray(obj.group_by, "group_by");
  delete obj.group_by;
  const out = obj.out;
  delete obj.out;
  if (typeof out !== "string" || out.length === 0) {
    throw new SpecError("out must be a nonempty path");
  }
  const sidecar = obj.sidecar;
  delete obj.sidecar;
  if (sidecar !== undefined && typeof sidecar !== "string") {
    throw new SpecError("sidecar must be a path");
  }
  const unknown = Object.keys(obj);
  if (unknown.length > 0) {
    throw new SpecError(`unknown plot spec keys: ${unknown.sort().join(", ")}`);
  }
  if (kind === "synthetic_lines" && sidecar === undefined) {
    throw new SpecError("synthetic_lines requires a sidecar with final models");
  }
  for (const col of groupBy) {
    if (!(RESULT_COLUMNS as readonly string[]).includes(col)) {
      throw new SpecError(`group_by column ${col} is not in the results schema`);
    }
  }
  return { kind: kind as FigureKind, csv, groupBy, out, sidecar };
}
