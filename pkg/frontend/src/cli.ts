/** render --kind <bands|ids|lifshitz|wegner|decay> --in <paths,...> --out <file.svg>
 *
 * Exit codes: 0 rendered, 2 bad arguments or schema mismatch or empty data.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { SchemaError } from "./csv.js";
import {
  EmptyDataError,
  renderBands,
  renderDecay,
  renderIds,
  renderLifshitz,
  renderWegner,
} from "./kinds.js";

interface Args {
  kind: string;
  inputs: string[];
  out: string;
}

function parseArgs(argv: string[]): Args {
  if (argv[0] !== "render") {
    throw new SchemaError(`unknown command '${argv[0] ?? ""}'; expected 'render'`);
  }
  let kind = "";
  let inputs: string[] = [];
  let out = "";
  for (let i = 1; i < argv.length; i += 2) {
    const key = argv[i];
    const value = argv[i + 1];
    if (value === undefined) throw new SchemaError(`missing value for ${key}`);
    if (key === "--kind") kind = value;
    else if (key === "--in") inputs = value.split(",");
    else if (key === "--out") out = value;
    else throw new SchemaError(`unknown option ${key}`);
  }
  if (!kind || inputs.length === 0 || !out) {
    throw new SchemaError("render needs --kind, --in and --out");
  }
  return { kind, inputs, out };
}

export function render(kind: string, inputs: string[]): string {
  const read = (i: number) => readFileSync(inputs[i], "utf-8");
  switch (kind) {
    case "bands":
      return renderBands(read(0), inputs[0], inputs.length > 1 ? read(1) : undefined);
    case "ids":
      return renderIds(read(0), inputs[0]);
    case "lifshitz":
      return renderLifshitz(read(0), inputs[0]);
    case "wegner": {
      if (inputs.length < 2) {
        throw new SchemaError("wegner rendering needs the CSV table and the JSON report");
      }
      return renderWegner(read(0), inputs[0], read(1));
    }
    case "decay":
      return renderDecay(read(0), inputs[0]);
    default:
      throw new SchemaError(`unknown figure kind '${kind}'`);
  }
}

export function main(argv: string[]): number {
  try {
    const args = parseArgs(argv);
    const svg = render(args.kind, args.inputs);
    writeFileSync(args.out, svg, "utf-8");
    console.log(`ok: ${args.kind} -> ${args.out}`);
    return 0;
  } catch (err) {
    if (err instanceof SchemaError || err instanceof EmptyDataError) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    console.error(`error: ${String(err)}`);
    return 2;
  }
}

const isMain = process.argv[1] !== undefined && import.meta.url.endsWith("cli.js");
if (isMain) {
  process.exit(main(process.argv.slice(2)));
}
