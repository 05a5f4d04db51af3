import { z } from "zod";

export const LifshitzReport = z.object({
  band_edge: z.number(),
  deterministic_edge: z.number(),
  fit_window: z.array(z.number()).length(2),
  slope: z.number(),
  slope_ci: z.array(z.number()).length(2),
  intercept: z.number(),
  target: z.number(),
  n_points: z.number().int(),
  superpolynomial: z.record(z.string(), z.boolean()),
  log_energies: z.array(z.number()),
  loglog_values: z.array(z.number()),
});
export type LifshitzReport = z.infer<typeof LifshitzReport>;

export const WegnerReport = z.object({
  e0: z.number(),
  q: z.number(),
  c_hat: z.number(),
  degenerate: z.boolean(),
  all_consistent: z.boolean(),
});
export type WegnerReport = z.infer<typeof WegnerReport>;

export const GapReport = z.object({
  found: z.boolean(),
  lower_edge: z.number().nullable().optional(),
  upper_edge: z.number().nullable().optional(),
});
export type GapReport = z.infer<typeof GapReport>;
