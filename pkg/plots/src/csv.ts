/**
 * Strict CSV loaders for the simulator's two file formats. Both fail loudly,
 * naming the missing column or the offending line: silently dropping a
 * column would silently corrupt every figure downstream.
 */

import { readFileSync } from "fs";

import { DataPoint, RESULT_COLUMNS, ResultRow } from "./schema";

export class CsvError extends Error {}

/** Floats are serialized by the simulator as %.17g; inf/nan spellings included. */
export function parseFloatStrict(raw: string, where: string): number {
  const s = raw.trim();
  if (s === "inf") return Infinity;
  if (s === "-inf") return -Infinity;
  if (s === "nan") return NaN;
  const v = Number(s);
  if (s === "" || Number.isNaN(v)) {
    throw new CsvError(`${where}: not a number: "${raw}"`);
  }
  return v;
}

function splitLines(path: string): string[][] {
  const text = readFileSync(path, "utf-8");
  const lines = text
    .split("\n")
    .map((line) => (line.endsWith("\r") ? line.slice(0, -1) : line))
    .filter((line) => line.length > 0);
  if (lines.length === 0) throw new CsvError(`${path}: empty file`);
  return lines.map((line) => line.split(","));
}

export function loadResults(path: string): ResultRow[] {
  const rows = splitLines(path);
  const header = rows[0];
  for (const col of RESULT_COLUMNS) {
    if (!header.includes(col)) {
      throw new CsvError(`${path}: missing required column "${col}"`);
    }
  }
  const index = new Map(header.map((name, i) => [name, i]));
  const out: ResultRow[] = [];
  for (let ln = 1; ln < rows.length; ln++) {
    const cells = rows[ln];
    if (cells.length !== header.length) {
      throw new CsvError(
        `${path}: line ${ln + 1}: expected ${header.length} cells, got ${cells.length}`
      );
    }
    const cell = (name: string) => cells[index.get(name)!];
    const num = (name: string) => parseFloatStrict(cell(name), `${path}: line ${ln + 1} (${name})`);
    out.push({
      seed: num("seed"),
      round: num("round"),
      method: cell("method"),
      B: num("B"),
      eps_dp: num("eps_dp"),
      sigma_theta: num("sigma_theta"),
      sigma_s: num("sigma_s"),
      train_loss: num("train_loss"),
      val_loss: num("val_loss"),
      val_accuracy: num("val_accuracy"),
      clustering_accuracy: num("clustering_accuracy"),
      min_group_size: num("min_group_size"),
      max_group_size: num("max_group_size"),
      donors_this_round: num("donors_this_round"),
      collapsed_clusters: num("collapsed_clusters"),
    });
  }
  if (out.length === 0) throw new CsvError(`${path}: no data rows`);
  return out;
}

/** Dataset CSV: client_id,feature_0,target[,true_cluster]; 1-D features only. */
export function loadDataPoints(path: string): DataPoint[] {
  const rows = splitLines(path);
  const header = rows[0];
  for (const col of ["client_id", "feature_0", "target"]) {
    if (!header.includes(col)) {
      throw new CsvError(`${path}: missing required column "${col}"`);
    }
  }
  if (header.includes("feature_1")) {
    throw new CsvError(`${path}: scatter panels support 1-D features only`);
  }
  const index = new Map(header.map((name, i) => [name, i]));
  const hasTruth = header.includes("true_cluster");
  const out: DataPoint[] = [];
  for (let ln = 1; ln < rows.length; ln++) {
    const cells = rows[ln];
    const where = `${path}: line ${ln + 1}`;
    if (cells.length !== header.length) {
      throw new CsvError(`${where}: expected ${header.length} cells, got ${cells.length}`);
    }
    out.push({
      clientId: parseFloatStrict(cells[index.get("client_id")!], where),
      x: parseFloatStrict(cells[index.get("feature_0")!], where),
      y: parseFloatStrict(cells[index.get("target")!], where),
      trueCluster: hasTruth
        ? parseFloatStrict(cells[index.get("true_cluster")!], where)
        : null,
    });
  }
  if (out.length === 0) throw new CsvError(`${path}: no data rows`);
  return out;
}
