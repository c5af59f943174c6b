/**
 * SVG rendering of the four figure kinds via echarts' server-side renderer.
 * Charts are fixed-size with animation disabled, so re-rendering the same
 * inputs reproduces the same image bytes.
 */

import { readFileSync, writeFileSync } from "fs";
import echarts = require("echarts");

import { Band, bandsBy, finalRound, pickMetric } from "./aggregate";
import { loadDataPoints, loadResults } from "./csv";
import { PlotSpec, ResultRow, Sidecar, SpecError } from "./schema";

const WIDTH = 800;
const HEIGHT = 560;
const PALETTE = [
  "#4e79a7", "#f28e2b", "#59a14f", "#e15759",
  "#b07aa1", "#76b7b2", "#edc948", "#9c755f",
];

function svgOf(option: echarts.EChartsOption): string {
  const chart = echarts.init(null, null, {
    renderer: "svg",
    ssr: true,
    width: WIDTH,
    height: HEIGHT,
  });
  try {
    chart.setOption({ animation: false, color: PALETTE, ...option });
    return chart.renderToSVGString();
  } finally {
    chart.dispose();
  }
}

function bandSeries(name: string, bands: Band[], color: string): echarts.SeriesOption[] {
  // min/max envelope drawn as a stacked area pair under the mean line
  const stack = `band-${name}`;
  return [
    {
      name: `${name}-min`,
      type: "line",
      stack,
      data: bands.map((b) => [b.x, b.min]),
      lineStyle: { opacity: 0 },
      symbol: "none",
      silent: true,
      tooltip: { show: false },
    },
    {
      name: `${name}-range`,
      type: "line",
      stack,
      data: bands.map((b) => [b.x, b.max - b.min]),
      lineStyle: { opacity: 0 },
      areaStyle: { color, opacity: 0.18 },
      symbol: "none",
      silent: true,
      tooltip: { show: false },
    },
    {
      name,
      type: "line",
      data: bands.map((b) => [b.x, b.mean]),
      itemStyle: { color },
      lineStyle: { color, width: 2 },
      symbol: "circle",
      symbolSize: 6,
    },
  ];
}

function bandedFigure(
  grouped: Map<string, Band[]>,
  title: string,
  xName: string,
  yName: string
): string {
  const series: echarts.SeriesOption[] = [];
  let i = 0;
  for (const [name, bands] of grouped) {
    series.push(...bandSeries(name, bands, PALETTE[i % PALETTE.length]));
    i += 1;
  }
  return svgOf({
    title: { text: title, left: "center" },
    legend: { bottom: 0, data: [...grouped.keys()] },
    xAxis: { type: "value", name: xName, nameLocation: "middle", nameGap: 28 },
    yAxis: { type: "value", name: yName, nameLocation: "middle", nameGap: 40, scale: true },
    grid: { left: 70, right: 30, top: 50, bottom: 70 },
    series,
  });
}

function renderConvergence(spec: PlotSpec): string {
  const rows = spec.csv.flatMap(loadResults);
  const metric = pickMetric(rows);
  const keyOf = (r: ResultRow) => spec.groupBy.map((c) => `${c}=${r[c as keyof ResultRow]}`).join(",");
  const grouped = bandsBy(rows, keyOf, (r) => r.round, (r) => r[metric] as number);
  if (grouped.size === 0) throw new SpecError("no finite metric values to plot");
  return bandedFigure(grouped, `${metric} vs round`, "round", metric);
}

function renderSweep(spec: PlotSpec, xCol: "B" | "eps_dp"): string {
  const rows = spec.csv.flatMap(loadResults);
  const metric = pickMetric(rows);
  // one curve over the sweep axis; final-round value per (sweep point, seed)
  const runKey = (r: ResultRow) => `${r[xCol]}|${r.seed}`;
  const finals = finalRound(rows, runKey);
  const grouped = bandsBy(finals, () => "final", (r) => r[xCol] as number, (r) => r[metric] as number);
  const bands = grouped.get("final") ?? [];
  if (bands.length === 0) throw new SpecError("no finite metric values to plot");
  const title = xCol === "B" ? `${metric} vs rebalance threshold` : `${metric} vs epsilon`;
  return bandedFigure(new Map([["final", bands]]), title, xCol, metric);
}

function renderSyntheticLines(spec: PlotSpec): string {
  const points = spec.csv.flatMap(loadDataPoints);
  const sidecar = JSON.parse(readFileSync(spec.sidecar!, "utf-8")) as Sidecar;
  const lastPoint = sidecar.points[sidecar.points.length - 1];
  if (!lastPoint) throw new SpecError(`${spec.sidecar}: sidecar has no run points`);
  const seeds = Object.keys(lastPoint.final_models).sort();
  const models = lastPoint.final_models[seeds[0]];
  if (!models) throw new SpecError(`${spec.sidecar}: sidecar has no final models`);

  const xs = points.map((p) => p.x);
  const xMin = Math.min(...xs);
  const xMax = Math.max(...xs);

  const clusters = [...new Set(points.map((p) => p.trueCluster ?? 0))].sort(
    (a, b) => (a as number) - (b as number)
  );
  const series: echarts.SeriesOption[] = clusters.map((c, i) => ({
    name: `cluster ${c}`,
    type: "scatter",
    symbolSize: 4,
    itemStyle: { color: PALETTE[i % PALETTE.length], opacity: 0.55 },
    data: points.filter((p) => (p.trueCluster ?? 0) === c).map((p) => [p.x, p.y]),
  }));
  models.forEach((m, j) => {
    if (m.length !== 2) {
      throw new SpecError("synthetic_lines expects (slope, intercept) models");
    }
    series.push({
      name: `model ${j}`,
      type: "line",
      data: [
        [xMin, m[0] * xMin + m[1]],
        [xMax, m[0] * xMax + m[1]],
      ],
      symbol: "none",
      lineStyle: { color: "#222222", width: 2, type: "dashed" },
    });
  });
  return svgOf({
    title: { text: "client data and fitted cluster models", left: "center" },
    legend: { bottom: 0, data: clusters.map((c) => `cluster ${c}`) },
    xAxis: { type: "value", name: "x", nameLocation: "middle", nameGap: 28 },
    yAxis: { type: "value", name: "y", nameLocation: "middle", nameGap: 40, scale: true },
    grid: { left: 70, right: 30, top: 50, bottom: 70 },
    series,
  });
}

export function renderToString(spec: PlotSpec): string {
  switch (spec.kind) {
    case "convergence":
      return renderConvergence(spec);
    case "b_sweep":
      return renderSweep(spec, "B");
    case "eps_sweep":
      return renderSweep(spec, "eps_dp");
    case "synthetic_lines":
      return renderSyntheticLines(spec);
  }
}

/** Render and write the SVG; returns the output path. */
export function render(spec: PlotSpec): string {
  const svg = renderToString(spec);
  writeFileSync(spec.out, svg, "utf-8");
  return spec.out;
}
