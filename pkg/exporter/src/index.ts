import * as fs from "node:fs";

import { loadCheckpoint } from "./checkpoint.js";
import { convert } from "./convert.js";
import { verifyRoundTrip } from "./verify.js";
import { ExportManifest } from "./types.js";

export { loadCheckpoint, convOutputHW } from "./checkpoint.js";
export { convert, flatPermutation } from "./convert.js";
export { evalSource, evalV1Model } from "./evaluate.js";
export { verifyRoundTrip } from "./verify.js";
export { mulberry32, uniformVector } from "./rng.js";
export * from "./types.js";

export const VERIFY_TOLERANCE = 1e-5;

/** Convert a checkpoint, write the version-1 document, verify the round trip. */
export function exportCheckpoint(
    checkpointPath: string,
    outPath: string,
    seed = 0,
): ExportManifest {
    const model = loadCheckpoint(checkpointPath);
    const doc = convert(model);
    fs.writeFileSync(outPath, JSON.stringify(doc));
    const check = verifyRoundTrip(model, doc, seed);
    return {
        source: checkpointPath,
        output: outPath,
        verified: check.max_forward_discrepancy < VERIFY_TOLERANCE,
        max_forward_discrepancy: check.max_forward_discrepancy,
        inputs_checked: check.inputs_checked,
        seed,
    };
}
