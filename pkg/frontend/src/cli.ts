import { readFileSync } from "fs";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { FIGURE_KINDS, FigureKind, FigureSpec, render } from "./figures";
import { EmptyDataError, SchemaError } from "./schema";

interface SpecFile {
  figures: FigureSpec[];
}

export function main(argv: string[]): number {
  const args = yargs(argv)
    .usage("render figures from estimation-sweep and beam-pattern CSV files")
    .option("spec", { type: "string", describe: "JSON file listing figure specs" })
    .option("kind", { type: "string", choices: FIGURE_KINDS, describe: "figure kind" })
    .option("input", { type: "string", describe: "input CSV path" })
    .option("out", { type: "string", describe: "output SVG path" })
    .option("title", { type: "string" })
    .option("markers", { type: "string", describe: "comma-separated azimuths to mark" })
    .strict()
    .parseSync();

  let specs: FigureSpec[];
  if (args.spec) {
    const doc = JSON.parse(readFileSync(args.spec, "utf8")) as SpecFile;
    if (!Array.isArray(doc.figures)) {
      console.error("spec file must carry a 'figures' array");
      return 2;
    }
    specs = doc.figures;
  } else {
    if (!args.kind || !args.input || !args.out) {
      console.error("need --spec, or --kind with --input and --out");
      return 2;
    }
    specs = [
      {
        kind: args.kind as FigureKind,
        input: args.input,
        output: args.out,
        title: args.title,
        markers: args.markers ? args.markers.split(",").map(Number) : undefined,
      },
    ];
  }

  for (const spec of specs) {
    try {
      render(spec);
      console.log(`wrote ${spec.output}`);
    } catch (err) {
      if (err instanceof SchemaError || err instanceof EmptyDataError) {
        console.error(`${spec.kind}: ${err.message}`);
        return 1;
      }
      throw err;
    }
  }
  return 0;
}

if (require.main === module) {
  process.exit(main(hideBin(process.argv)));
}
