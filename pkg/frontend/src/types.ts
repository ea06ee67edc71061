/** Payload shapes mirrored from the engine's canonical JSON. */

export interface ComponentSpec {
  name: string;
  unit: string;
  lower: number;
  upper: number;
  step: number;
  cost_poly: [number, number, number];
  expected_or_per_unit: number | null;
}

export interface CovariateSpec {
  name: string;
  reference_value: number;
}

export interface TrialConfig {
  components: ComponentSpec[];
  covariates: CovariateSpec[];
  num_stages: number;
  icc: number | null;
  currency_label: string;
  fixed_cost: number;
}

export interface PredictedOutcome {
  probability: number;
  linear_predictor: number | null;
  se_linear: number | null;
  ci_lower: number | null;
  ci_upper: number | null;
  level: number;
}

export interface PackageDict {
  doses: number[];
}

export interface OptimizePayload {
  status: string;
  package: PackageDict;
  predicted: PredictedOutcome;
  cost: number;
  grid_size: number;
  constraints: {
    goal: number;
    failed_goal: number | null;
    failed_power: number | null;
    failed_budget: number | null;
    n_feasible: number;
  };
}

export interface ConfsetMember {
  package: PackageDict;
  probability: number;
  cost: number;
}

export interface ConfsetPayload {
  members: ConfsetMember[];
  grid_size: number;
  level: number;
  goal: number;
  fraction_of_grid: number;
  cost_min: number | null;
  cost_max: number | null;
  bands:
    | {
        dose_1: number;
        dose_2_min: number;
        dose_2_max: number;
        count: number;
        contiguous: boolean;
      }[]
    | null;
}

export interface FitPayload {
  component_names: string[];
  covariate_names: string[];
  intercept: number;
  component_coefs: number[];
  covariate_coefs: number[];
  component_odds_ratios: number[];
  vcov_model: number[][];
  vcov_robust: number[][];
  n_rows: number;
  n_clusters: number;
  loglik: number;
  converged: boolean;
  iterations: number;
  report_scales: number[];
}

/** The engine's next-stage recommendation schema; exports must match it. */
export interface RecommendationExport {
  for_stage: number;
  package: PackageDict;
  basis: FitPayload;
  predicted: PredictedOutcome;
  cost: number;
  status: string;
  notes: string[];
  stabilized: boolean | null;
}

export interface PowerContextDraft {
  n_per_arm: number;
  cluster_size?: number;
  icc?: number;
  alpha?: number;
  baseline_rate?: number;
}

export interface CriteriaDraft {
  goal_type: "absolute" | "relative_increase";
  goal_value: number;
  level: number;
  covariate_profile: Record<string, number> | null;
  baseline_rate: number | null;
  budget: number | null;
  power_target: number | null;
  power_context: PowerContextDraft | null;
  use_robust_vcov: boolean;
}
