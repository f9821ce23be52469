/**
 * Shared layout schema, mirrored from the generation service.
 *
 * The JSON fixture files under ../../tests/fixtures/layouts are the contract:
 * the schema test suite runs the same files through this module and the
 * primary suite runs them through the server's validator, so the two sides
 * cannot drift apart silently. Constraints mirror the server exactly:
 * class_id in [0, 9], centers and sizes in [0, 1], at most 32 boxes,
 * velocity/ego_motion/lane points are free number pairs.
 */

import { z } from "zod";

export const NUM_CLASSES = 10;
export const MAX_BOXES = 32;
export const LANE_TYPES = ["lane_divider", "road_boundary", "crossing"] as const;

const unitInterval = z.number().min(0).max(1);
const numberPair = z.tuple([z.number(), z.number()]);

export const BoxSchema = z.object({
  class_id: z.number().int().min(0).max(NUM_CLASSES - 1),
  center: z.tuple([unitInterval, unitInterval]),
  size: z.tuple([unitInterval, unitInterval]),
  velocity: numberPair.default([0, 0]),
});

export const LaneSchema = z.object({
  element_type: z.enum(LANE_TYPES),
  points: z.array(numberPair).min(2),
});

export const LayoutSchema = z.object({
  boxes: z.array(BoxSchema).max(MAX_BOXES).default([]),
  lanes: z.array(LaneSchema).default([]),
  ego_motion: numberPair.default([0, 0]),
});

export type Box = z.infer<typeof BoxSchema>;
export type Lane = z.infer<typeof LaneSchema>;
export type Layout = z.infer<typeof LayoutSchema>;

export const StepResponseSchema = z.object({
  frame_index: z.number().int().positive(),
  frame_png: z.string(),
  prior_origin: z.enum(["gaussian", "reference", "propagated"]),
});
export type StepResponse = z.infer<typeof StepResponseSchema>;

export const SessionCreatedSchema = z.object({
  session_id: z.string(),
});

export const SessionInfoSchema = z.object({
  session_id: z.string(),
  mode: z.enum(["generator", "simulator"]),
  frames_generated: z.number().int().min(0),
  config_hash: z.string(),
});
export type SessionInfo = z.infer<typeof SessionInfoSchema>;

export const ErrorBodySchema = z.object({
  error: z
    .object({
      code: z.string(),
      message: z.string(),
      fields: z.array(z.string()).optional(),
    })
    .passthrough(),
});
export type ErrorBody = z.infer<typeof ErrorBodySchema>;

/** Validate an arbitrary document; returns human-readable issues, [] if valid. */
export function validateLayout(doc: unknown): string[] {
  const parsed = LayoutSchema.safeParse(doc);
  if (parsed.success) return [];
  return parsed.error.issues.map(
    (issue) => `${issue.path.join(".") || "$"}: ${issue.message}`,
  );
}

/** Parse and normalize, throwing on invalid input. */
export function parseLayout(doc: unknown): Layout {
  return LayoutSchema.parse(doc);
}
