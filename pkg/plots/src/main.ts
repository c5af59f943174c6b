/** CLI: `node dist/main.js <plotspec.json>` renders one figure. */

import { readFileSync } from "fs";

import { CsvError } from "./csv";
import { render } from "./render";
import { parsePlotSpec, SpecError } from "./schema";

export function main(argv: string[]): number {
  if (argv.length !== 1) {
    console.error("usage: render <plotspec.json>");
    return 2;
  }
  try {
    const raw = JSON.parse(readFileSync(argv[0], "utf-8"));
    const out = render(parsePlotSpec(raw));
    console.log(out);
    return 0;
  } catch (err) {
    if (err instanceof SpecError || err instanceof CsvError) {
      console.error(`plot spec error: ${(err as Error).message}`);
      return 2;
    }
    console.error(`render failed: ${(err as Error).message}`);
    return 3;
  }
}

process.exit(main(process.argv.slice(2)));
