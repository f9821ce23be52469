/**
 * Schema contract tests over the fixture files shared with the primary
 * component (../../tests/fixtures/layouts). Every valid fixture must parse,
 * every invalid fixture must be rejected, and parsing must not alter a
 * fully-specified document.
 */

import { readFileSync, readdirSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import { parseLayout, validateLayout } from "../src/schema.js";

const FIXTURES = join(__dirname, "..", "..", "tests", "fixtures", "layouts");
const names = readdirSync(FIXTURES).sort();
const validNames = names.filter((n) => n.startsWith("valid_"));
const invalidNames = names.filter((n) => n.startsWith("invalid_"));

const load = (name: string): unknown =>
  JSON.parse(readFileSync(join(FIXTURES, name), "utf-8"));

describe("shared layout fixtures", () => {
  it("fixture sets are non-empty", () => {
    expect(validNames.length).toBeGreaterThanOrEqual(3);
    expect(invalidNames.length).toBeGreaterThanOrEqual(5);
  });

  it.each(validNames)("%s is accepted and preserved", (name) => {
    const doc = load(name);
    expect(validateLayout(doc)).toEqual([]);
    // Fully-specified fixtures round-trip unchanged through the parser.
    expect(parseLayout(doc)).toEqual(doc);
  });

  it.each(invalidNames)("%s is rejected with named issues", (name) => {
    const issues = validateLayout(load(name));
    expect(issues.length).toBeGreaterThan(0);
  });
});

describe("local validation rules", () => {
  it("rejects more than 32 boxes", () => {
    const box = { class_id: 1, center: [0.5, 0.5], size: [0.1, 0.1], velocity: [0, 0] };
    const doc = { boxes: Array.from({ length: 33 }, () => ({ ...box })) };
    expect(validateLayout(doc).length).toBeGreaterThan(0);
  });

  it("fills defaults for omitted fields", () => {
    const layout = parseLayout({});
    expect(layout).toEqual({ boxes: [], lanes: [], ego_motion: [0, 0] });
  });

  it("rejects out-of-range centers with a path to the field", () => {
    const issues = validateLayout({
      boxes: [{ class_id: 1, center: [7, 7], size: [0.1, 0.1] }],
    });
    expect(issues.some((s) => s.includes("boxes.0.center"))).toBe(true);
  });
});
