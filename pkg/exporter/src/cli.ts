#!/usr/bin/env node
/** Usage: lipcert-export <checkpoint> <out.json> [--seed N]

<checkpoint> is a TF.js LayersModel model.json (or its directory). Prints
the export manifest as JSON; exits 1 when the checkpoint cannot be
converted or the round-trip check fails.
*/

import { exportCheckpoint } from "./index.js";

function main(argv: string[]): number {
    const positional: string[] = [];
    let seed = 0;
    for (let i = 0; i < argv.length; i++) {
        if (argv[i] === "--seed") {
            seed = Number(argv[++i]);
            if (!Number.isFinite(seed)) {
                console.error("error: --seed needs a number");
                return 1;
            }
        } else if (argv[i].startsWith("-")) {
            console.error(`error: unknown flag ${argv[i]}`);
            return 1;
        } else {
            positional.push(argv[i]);
        }
    }
    if (positional.length !== 2) {
        console.error("usage: lipcert-export <checkpoint> <out.json> [--seed N]");
        return 1;
    }
    try {
        const manifest = exportCheckpoint(positional[0], positional[1], seed);
        console.log(JSON.stringify(manifest, null, 2));
        return manifest.verified ? 0 : 1;
    } catch (err) {
        console.error(`error: ${err instanceof Error ? err.message : err}`);
        return 1;
    }
}

process.exit(main(process.argv.slice(2)));
