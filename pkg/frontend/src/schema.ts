import { readFileSync } from "fs";
import Papa from "papaparse";

/** Columns every sweep CSV must carry, in any order. */
export const SWEEP_COLUMNS = [
  "axis_name",
  "axis_value",
  "estimator",
  "beam",
  "d_total",
  "mse_analytic",
  "mse_analytic_db",
  "mse_mc",
  "mc_std",
  "mi_nats",
  "nmse_trace",
] as const;

export interface SweepRow {
  axisName: string;
  axisValue: number;
  estimator: string;
  beam: string;
  dTotal: number;
  mseAnalytic: number;
  mseAnalyticDb: number;
  mseMc: number | null;
  mcStd: number | null;
}

export interface PatternData {
  thetaDeg: number[];
  /** per-column gains in dB, one array per beamspace column */
  columnsDb: number[][];
  aggregateDb: number[];
}

export class SchemaError extends Error {}
export class EmptyDataError extends Error {}

function parseCsv(path: string): { header: string[]; rows: string[][] } {
  const text = readFileSync(path, "utf8");
  const parsed = Papa.parse<string[]>(text.trim(), { skipEmptyLines: true });
  if (parsed.errors.length > 0) {
    throw new SchemaError(`${path}: ${parsed.errors[0].message}`);
  }
  const data = parsed.data;
  if (data.length === 0) {
    throw new EmptyDataError(`${path}: no header row`);
  }
  return { header: data[0], rows: data.slice(1) };
}

function requireColumns(header: string[], required: readonly string[], path: string): Map<string, number> {
  const index = new Map(header.map((name, i) => [name, i]));
  for (const name of required) {
    if (!index.has(name)) {
      throw new SchemaError(`${path}: missing required column '${name}'`);
    }
  }
  return index;
}

function num(value: string, column: string, path: string): number {
  const parsed = Number(value);
  if (value === "" || !Number.isFinite(parsed)) {
    throw new SchemaError(`${path}: column '${column}' holds non-numeric value '${value}'`);
  }
  return parsed;
}

function optionalNum(value: string): number | null {
  return value === "" ? null : Number(value);
}

/** Load and validate a sweep CSV produced by the estimation CLI. */
export function loadSweep(path: string): SweepRow[] {
  const { header, rows } = parseCsv(path);
  const index = requireColumns(header, SWEEP_COLUMNS, path);
  if (rows.length === 0) {
    throw new EmptyDataError(`${path}: header only, no data rows`);
  }
  const at = (row: string[], name: string) => row[index.get(name)!] ?? "";
  return rows.map((row) => ({
    axisName: at(row, "axis_name"),
    axisValue: num(at(row, "axis_value"), "axis_value", path),
    estimator: at(row, "estimator"),
    beam: at(row, "beam"),
    dTotal: num(at(row, "d_total"), "d_total", path),
    mseAnalytic: num(at(row, "mse_analytic"), "mse_analytic", path),
    mseAnalyticDb: num(at(row, "mse_analytic_db"), "mse_analytic_db", path),
    mseMc: optionalNum(at(row, "mse_mc")),
    mcStd: optionalNum(at(row, "mc_std")),
  }));
}

/** Load and validate a beam-pattern CSV (theta, per-column gains, aggregate). */
export function loadPattern(path: string): PatternData {
  const { header, rows } = parseCsv(path);
  const index = requireColumns(header, ["theta_deg", "aggregate_db"], path);
  if (rows.length === 0) {
    throw new EmptyDataError(`${path}: header only, no data rows`);
  }
  const columnNames = header.filter((name) => /^col\d+_db$/.test(name)).sort();
  const thetaDeg: number[] = [];
  const aggregateDb: number[] = [];
  const columnsDb: number[][] = columnNames.map(() => []);
  for (const row of rows) {
    thetaDeg.push(num(row[index.get("theta_deg")!], "theta_deg", path));
    aggregateDb.push(num(row[index.get("aggregate_db")!], "aggregate_db", path));
    columnNames.forEach((name, i) => {
      columnsDb[i].push(num(row[index.get(name)!], name, path));
    });
  }
  return { thetaDeg, columnsDb, aggregateDb };
}
