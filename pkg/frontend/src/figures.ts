import { writeFileSync } from "fs";
import * as echarts from "echarts";
import { EmptyDataError, SchemaError, SweepRow, loadPattern, loadSweep } from "./schema";

export type FigureKind =
  | "beam_pattern"
  | "mse_vs_dimension"
  | "normalized_mse_vs_dimension"
  | "mse_vs_snr"
  | "mse_vs_inr"
  | "mse_vs_separation";

export const FIGURE_KINDS: FigureKind[] = [
  "beam_pattern",
  "mse_vs_dimension",
  "normalized_mse_vs_dimension",
  "mse_vs_snr",
  "mse_vs_inr",
  "mse_vs_separation",
];

export interface FigureSpec {
  kind: FigureKind;
  /** input CSV: a sweep file, or a beam-pattern file for beam_pattern */
  input: string;
  output: string;
  title?: string;
  /** azimuths to mark on beam patterns, e.g. interferer sector centers */
  markers?: number[];
  width?: number;
  height?: number;
}

const X_LABEL: Record<string, string> = {
  dimension: "beamspace dimension D",
  snr_db: "snr (dB)",
  inr_db: "inr (dB)",
  separation_deg: "angular separation (deg)",
};

interface Series {
  name: string;
  points: [number, number][];
}

function seriesKey(row: SweepRow, axisIsDimension: boolean, multiDim: boolean): string {
  const beam = row.beam === "none" ? "" : ` / ${row.beam}`;
  const dim = !axisIsDimension && multiDim ? ` (D=${row.dTotal})` : "";
  return `${row.estimator}${beam}${dim}`;
}

function groupSeries(rows: SweepRow[], values: (row: SweepRow) => number | null): Series[] {
  const axisIsDimension = rows[0].axisName === "dimension";
  const dims = new Set(rows.map((r) => r.dTotal));
  const byKey = new Map<string, [number, number][]>();
  for (const row of rows) {
    const value = values(row);
    if (value === null) {
      continue;
    }
    const key = seriesKey(row, axisIsDimension, dims.size > 1);
    if (!byKey.has(key)) {
      byKey.set(key, []);
    }
    byKey.get(key)!.push([row.axisValue, value]);
  }
  return [...byKey.entries()]
    .map(([name, points]) => ({ name, points: points.sort((a, b) => a[0] - b[0]) }))
    .sort((a, b) => a.name.localeCompare(b.name));
}

/** Divide each curve by the joint GEB Wiener benchmark at the same grid value. */
function normalizeAgainstBenchmark(rows: SweepRow[]): SweepRow[] {
  const benchmark = new Map<number, number>();
  for (const row of rows) {
    if (row.estimator === "rrmmse_joint" && row.beam === "geb") {
      benchmark.set(row.axisValue, row.mseAnalytic);
    }
  }
  if (benchmark.size === 0) {
    throw new SchemaError(
      "normalized figure needs rrmmse_joint/geb benchmark rows at each grid value"
    );
  }
  return rows
    .filter((row) => benchmark.has(row.axisValue) && row.beam !== "none")
    .map((row) => ({
      ...row,
      mseAnalytic: row.mseAnalytic / benchmark.get(row.axisValue)!,
      mseAnalyticDb: row.mseAnalyticDb - 10 * Math.log10(benchmark.get(row.axisValue)!),
    }));
}

/** Rename the renderer's instance-counter ids and CSS classes so output bytes
 * depend only on the input data, not on how many charts this process rendered. */
function canonicalizeClassNames(svg: string): string {
  const stripped = svg.replace(/zr\d+-/g, "zr-");
  const mapping = new Map<string, string>();
  return stripped.replace(/zr-cls-\d+/g, (token) => {
    if (!mapping.has(token)) {
      mapping.set(token, `zr-cls-${mapping.size}`);
    }
    return mapping.get(token)!;
  });
}

function renderChart(
  spec: FigureSpec,
  xLabel: string,
  yLabel: string,
  series: Series[],
  markers: number[] = []
): string {
  const chart = echarts.init(null, null, {
    renderer: "svg",
    ssr: true,
    width: spec.width ?? 860,
    height: spec.height ?? 540,
  });
  try {
    chart.setOption({
      animation: false,
      title: { text: spec.title ?? spec.kind, left: "center" },
      legend: { bottom: 0, type: "scroll" },
      grid: { left: 70, right: 30, top: 50, bottom: 70 },
      xAxis: { type: "value", name: xLabel, nameLocation: "middle", nameGap: 28, scale: true },
      yAxis: { type: "value", name: yLabel, nameLocation: "middle", nameGap: 48, scale: true },
      series: series.map((s) => ({
        name: s.name,
        type: "line",
        showSymbol: series.length > 1,
        symbolSize: 5,
        data: s.points,
        markLine:
          markers.length > 0 && s === series[series.length - 1]
            ? {
                symbol: "none",
                lineStyle: { type: "dashed" },
                label: { formatter: "{c}" },
                data: markers.map((x) => ({ xAxis: x })),
              }
            : undefined,
      })),
    });
    return canonicalizeClassNames(chart.renderToSVGString());
  } finally {
    chart.dispose();
  }
}

/** Render one figure to an SVG file; returns the SVG markup. */
export function render(spec: FigureSpec): string {
  if (!FIGURE_KINDS.includes(spec.kind)) {
    throw new SchemaError(`unknown figure kind '${spec.kind}'`);
  }
  let svg: string;
  if (spec.kind === "beam_pattern") {
    const pattern = loadPattern(spec.input);
    const series: Series[] = pattern.columnsDb.map((column, i) => ({
      name: `column ${i}`,
      points: pattern.thetaDeg.map((t, j) => [t, column[j]] as [number, number]),
    }));
    series.push({
      name: "aggregate",
      points: pattern.thetaDeg.map((t, j) => [t, pattern.aggregateDb[j]] as [number, number]),
    });
    svg = renderChart(spec, "azimuth (deg)", "gain (dB)", series, spec.markers ?? []);
  } else {
    let rows = loadSweep(spec.input);
    let yLabel = "MSE (dB)";
    if (spec.kind === "normalized_mse_vs_dimension") {
      rows = normalizeAgainstBenchmark(rows);
      yLabel = "MSE relative to benchmark (dB)";
      if (rows.length === 0) {
        throw new EmptyDataError(`${spec.input}: nothing left after normalization`);
      }
    }
    const xLabel = X_LABEL[rows[0].axisName] ?? rows[0].axisName;
    const series = groupSeries(rows, (row) => row.mseAnalyticDb);
    svg = renderChart(spec, xLabel, yLabel, series, spec.markers ?? []);
  }
  writeFileSync(spec.output, svg);
  return svg;
}
