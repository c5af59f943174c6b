import { describe, expect, it } from "vitest";

import { parsePlotSpec, SpecError } from "../src/schema";

const valid = {
  kind: "convergence",
  csv: ["results.csv"],
  group_by: ["method"],
  out: "fig.svg",
};

describe("parsePlotSpec", () => {
  it("accepts a minimal spec and defaults group_by", () => {
    const spec = parsePlotSpec({ kind: "b_sweep", csv: ["a.csv"], out: "o.svg" });
    expect(spec.groupBy).toEqual(["method"]);
  });

  it("round-trips a full spec", () => {
    const spec = parsePlotSpec(valid);
    expect(spec.kind).toBe("convergence");
    expect(spec.csv).toEqual(["results.csv"]);
  });

  it("rejects unknown kinds", () => {
    expect(() => parsePlotSpec({ ...valid, kind: "pie" })).toThrow(SpecError);
  });

  it("rejects unknown keys", () => {
    expect(() => parsePlotSpec({ ...valid, bogus: 1 })).toThrow(/unknown plot spec keys: bogus/);
  });

  it("rejects group_by columns outside the schema", () => {
    expect(() => parsePlotSpec({ ...valid, group_by: ["nope"] })).toThrow(/not in the results schema/);
  });

  it("requires a csv list", () => {
    expect(() => parsePlotSpec({ ...valid, csv: [] })).toThrow(SpecError);
  });

  it("requires a sidecar for synthetic_lines", () => {
    expect(() =>
      parsePlotSpec({ kind: "synthetic_lines", csv: ["d.csv"], out: "o.svg" })
    ).toThrow(/sidecar/);
  });
});
