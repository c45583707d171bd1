// Thin wrapper exposing the gecforge pipeline to JS/TS data loaders.
//
// Zero-logic rule: every function here shells out to the gecforge CLI (the
// toolkit's external interface) and converts types; no corruption, scoring
// or evaluation logic lives on this side of the boundary. That is what the
// parity tests prove.

import { spawnSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export const VERSION = "0.1.0";

export interface OpsPerSentenceSpec {
  distribution?: string;
  mean?: number;
  cap?: number;
}

// Mirrors the core's corruption config field-for-field; validation happens
// in the core and its error text is rethrown verbatim.
export interface CorruptionConfig {
  p_uncorrupted?: number;
  op_weights?: Record<string, number>;
  ops_per_sentence?: OpsPerSentenceSpec;
  max_token_span?: number;
  max_char_span?: number;
  seed?: number;
}

export interface PlanStep {
  op: string;
  positions: number[];
  length: number;
  chars: string;
}

export interface CorruptionPlan {
  id: number;
  pass_through: boolean;
  steps: PlanStep[];
}

export interface CorruptedPair {
  lang: string;
  source: string;
  target: string;
  plan: CorruptionPlan;
}

export interface SentencePair {
  lang: string;
  source: string;
  target: string;
}

export interface CorpusStats {
  n_pairs: number;
  n_source_tokens: number;
  n_target_tokens: number;
  lr: number | null;
  wer: number | null;
  sub: number | null;
  del: number | null;
  ins: number | null;
}

export interface TypeReport {
  tp: number;
  fp: number;
  fn: number;
  precision: number;
  recall: number;
  f_beta: number;
}

export interface EvalReport {
  tp: number;
  fp: number;
  fn: number;
  precision: number;
  recall: number;
  f_beta: number;
  beta: number;
  per_type: Record<string, TypeReport>;
}

export interface EvaluateOptions {
  retokenize?: boolean;
  annotatorPolicy?: "greedy-cumulative" | "per-sentence";
  maxMerge?: number;
}

function cliCommand(): string[] {
  const override = process.env.GECFORGE_CLI;
  return override ? override.split(" ") : ["gecforge"];
}

function runCli(args: string[], stdin?: string): string {
  const [cmd, ...head] = cliCommand();
  const proc = spawnSync(cmd, [...head, ...args], {
    input: stdin ?? "",
    encoding: "utf-8",
    maxBuffer: 1024 * 1024 * 1024,
  });
  if (proc.error) {
    throw proc.error;
  }
  if (proc.status !== 0) {
    const stderr = proc.stderr ?? "";
    const diagnostic =
      stderr
        .split("\n")
        .filter((line) => line.trim().length > 0)
        .pop() ?? `gecforge exited with status ${proc.status}`;
    throw new Error(diagnostic);
  }
  return proc.stdout ?? "";
}

function withTempDir<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "gecforge-"));
  try {
    return fn(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

function toTsv(pairs: Array<{ lang: string; source: string; target?: string }>): string {
  return pairs
    .map((p) =>
      p.target === undefined
        ? `${p.lang}\t${p.source}\n`
        : `${p.lang}\t${p.source}\t${p.target}\n`,
    )
    .join("");
}

/** Corrupt a batch of clean sentences; record indices run from startIndex. */
export function corruptMany(
  sentences: string[],
  config: CorruptionConfig = {},
  startIndex = 0,
  lang = "und",
): CorruptedPair[] {
  if (sentences.length === 0) {
    return [];
  }
  return withTempDir((dir) => {
    const configPath = join(dir, "config.json");
    const plansPath = join(dir, "plans.jsonl");
    const seed = config.seed ?? 0;
    writeFileSync(configPath, JSON.stringify(config));
    const stdout = runCli(
      [
        "corrupt",
        "--seed", String(seed),
        "--config", configPath,
        "--plans", plansPath,
        "--start-id", String(startIndex),
        "--no-manifest",
      ],
      toTsv(sentences.map((s) => ({ lang, source: s }))),
    );
    const lines = stdout.split("\n").filter((line) => line.length > 0);
    const plans = readFileSync(plansPath, "utf-8")
      .split("\n")
      .filter((line) => line.length > 0)
      .map((line) => JSON.parse(line) as CorruptionPlan);
    if (lines.length !== sentences.length || plans.length !== sentences.length) {
      throw new Error(
        `corrupt returned ${lines.length} pairs and ${plans.length} plans ` +
          `for ${sentences.length} sentences`,
      );
    }
    return lines.map((line, i) => {
      const [outLang, source, target] = line.split("\t");
      return { lang: outLang, source, target, plan: plans[i] };
    });
  });
}

/** Corrupt one sentence deterministically for the given record index. */
export function corrupt(
  sentence: string,
  config: CorruptionConfig = {},
  recordIndex = 0,
): { source: string; target: string; plan: CorruptionPlan } {
  const [pair] = corruptMany([sentence], config, recordIndex);
  return { source: pair.source, target: pair.target, plan: pair.plan };
}

/** Corpus length ratio and WER decomposition over (source, target) pairs. */
export function corpusStats(pairs: SentencePair[]): CorpusStats {
  const stdout = runCli(["stats", "--json", "--no-manifest"], toTsv(pairs));
  return JSON.parse(stdout) as CorpusStats;
}

/** MaxMatch F_0.5 of hypotheses against an M2 gold file's contents. */
export function evaluate(
  goldM2Text: string,
  hypotheses: string[],
  options: EvaluateOptions = {},
): EvalReport {
  return withTempDir((dir) => {
    const goldPath = join(dir, "gold.m2");
    const hypPath = join(dir, "hyp.txt");
    const reportPath = join(dir, "report.json");
    writeFileSync(goldPath, goldM2Text);
    writeFileSync(hypPath, hypotheses.map((h) => `${h}\n`).join(""));
    const args = [
      "evaluate",
      "--gold", goldPath,
      "--hyp", hypPath,
      "--json",
      "--output", reportPath,
      "--no-manifest",
    ];
    if (options.retokenize) {
      args.push("--retokenize");
    }
    if (options.annotatorPolicy) {
      args.push("--annotator-policy", options.annotatorPolicy);
    }
    if (options.maxMerge !== undefined) {
      args.push("--max-merge", String(options.maxMerge));
    }
    runCli(args);
    return JSON.parse(readFileSync(reportPath, "utf-8")) as EvalReport;
  });
}

/** Core toolkit version; must equal VERSION. */
export function coreVersion(): string {
  const out = runCli(["--version"]);
  return out.trim().split(" ").pop() ?? "";
}
