/** Round-trip verification: the source model and the exported document must
agree on seeded random inputs, up to the layout permutations. */

import { convOutputHW } from "./checkpoint.js";
import { flatPermutation } from "./convert.js";
import { evalSource, evalV1Model } from "./evaluate.js";
import { mulberry32, uniformVector } from "./rng.js";
import { SourceModel, V1Model } from "./types.js";

/** Shape of the source model's output: [d] or [h, w, c]. */
function outputShape(model: SourceModel): number[] {
    let shape = [...model.inputShape];
    for (const layer of model.layers) {
        if (layer.kind === "dense") {
            shape = [layer.units];
        } else if (layer.kind === "conv2d") {
            const [oh, ow] = convOutputHW(shape[0], shape[1], layer);
            shape = [oh, ow, layer.filters];
        } else if (layer.kind === "flatten") {
            shape = [shape.reduce((a, b) => a * b, 1)];
        }
    }
    return shape;
}

export interface VerifyResult {
    max_forward_discrepancy: number;
    inputs_checked: number;
}

export function verifyRoundTrip(
    model: SourceModel,
    doc: V1Model,
    seed: number,
    inputs = 32,
): VerifyResult {
    const rand = mulberry32(seed);
    const inDim = model.inputShape.reduce((a, b) => a * b, 1);
    const inPerm =
        model.inputShape.length === 3
            ? flatPermutation(model.inputShape[0], model.inputShape[1], model.inputShape[2])
            : null;
    const outShape = outputShape(model);
    const outPerm =
        outShape.length === 3 ? flatPermutation(outShape[0], outShape[1], outShape[2]) : null;

    let worst = 0;
    for (let trial = 0; trial < inputs; trial++) {
        const xSource = uniformVector(rand, inDim);
        let xV1 = xSource;
        if (inPerm) {
            xV1 = new Float64Array(inDim);
            for (let m = 0; m < inDim; m++) xV1[m] = xSource[inPerm[m]];
        }
        const ySource = evalSource(model, xSource);
        const yV1 = evalV1Model(doc, xV1);
        if (ySource.length !== yV1.length) {
            throw new Error(
                `output sizes differ: source ${ySource.length}, exported ${yV1.length}`,
            );
        }
        for (let m = 0; m < yV1.length; m++) {
            const ref = outPerm ? ySource[outPerm[m]] : ySource[m];
            worst = Math.max(worst, Math.abs(yV1[m] - ref));
        }
    }
    return { max_forward_discrepancy: worst, inputs_checked: inputs };
}
