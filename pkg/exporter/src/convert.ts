/** Convert a parsed checkpoint to the version-1 model document.

The target format is channels-first and flattens (channel, row, column);
TF.js is channels-last and flattens (row, column, channel). Dense kernels
are stored [in, out] in TF.js but [out][in] in the target, and conv kernels
move from [kh, kw, in, out] to [out][in][kh][kw]. A Flatten that follows a
conv therefore permutes the columns of the next dense layer.
*/

import { convOutputHW } from "./checkpoint.js";
import {
    ConvLayer,
    DenseLayer,
    SourceModel,
    UnsupportedLayerError,
    V1Layer,
    V1Model,
} from "./types.js";

/** v1 flat index (c-major) -> TF.js flat index (channel-last) over (h, w, c). */
export function flatPermutation(h: number, w: number, c: number): number[] {
    const perm = new Array<number>(c * h * w);
    for (let ch = 0; ch < c; ch++) {
        for (let y = 0; y < h; y++) {
            for (let x = 0; x < w; x++) {
                perm[(ch * h + y) * w + x] = (y * w + x) * c + ch;
            }
        }
    }
    return perm;
}

type Shape =
    | { kind: "flat"; dim: number; perm: number[] | null }
    | { kind: "spatial"; h: number; w: number; c: number };

function denseEntry(layer: DenseLayer, perm: number[] | null): V1Layer {
    const weight: number[][] = [];
    for (let o = 0; o < layer.units; o++) {
        const row = new Array<number>(layer.inDim);
        for (let m = 0; m < layer.inDim; m++) {
            const src = perm ? perm[m] : m;
            row[m] = layer.kernel[src * layer.units + o];
        }
        weight.push(row);
    }
    return { type: "dense", weight, bias: Array.from(layer.bias) };
}

function convEntry(layer: ConvLayer, h: number, w: number): V1Layer {
    const [kh, kw] = layer.kernelSize;
    const [sh, sw] = layer.strides;
    const inC = layer.inChannels;
    const outC = layer.filters;

    let padH = 0;
    let padW = 0;
    if (layer.padding === "same") {
        const [oh, ow] = convOutputHW(h, w, layer);
        const totalH = Math.max((oh - 1) * sh + kh - h, 0);
        const totalW = Math.max((ow - 1) * sw + kw - w, 0);
        if (totalH % 2 !== 0 || totalW % 2 !== 0) {
            throw new UnsupportedLayerError(
                `layer ${layer.name}: "same" padding is asymmetric here ` +
                    `(totals ${totalH}x${totalW}); the target format only has symmetric padding`,
            );
        }
        padH = totalH / 2;
        padW = totalW / 2;
    }
    // the target computes floor((x + 2p - k) / s) + 1; make sure it agrees
    const [oh, ow] = convOutputHW(h, w, layer);
    const v1h = Math.floor((h + 2 * padH - kh) / sh) + 1;
    const v1w = Math.floor((w + 2 * padW - kw) / sw) + 1;
    if (v1h !== oh || v1w !== ow) {
        throw new UnsupportedLayerError(
            `layer ${layer.name}: output dims ${oh}x${ow} are not representable ` +
                `with symmetric padding (got ${v1h}x${v1w})`,
        );
    }

    const kernel: number[][][][] = [];
    for (let o = 0; o < outC; o++) {
        const perIn: number[][][] = [];
        for (let i = 0; i < inC; i++) {
            const rows: number[][] = [];
            for (let ky = 0; ky < kh; ky++) {
                const row = new Array<number>(kw);
                for (let kx = 0; kx < kw; kx++) {
                    row[kx] = layer.kernel[((ky * kw + kx) * inC + i) * outC + o];
                }
                rows.push(row);
            }
            perIn.push(rows);
        }
        kernel.push(perIn);
    }
    return {
        type: "conv2d",
        kernel,
        bias: Array.from(layer.bias),
        stride: [sh, sw],
        padding: [padH, padW],
    };
}

/** Convert the checkpoint; throws UnsupportedLayerError for anything the
target format cannot express. */
export function convert(model: SourceModel): V1Model {
    let shape: Shape;
    let inputShape: number[];
    if (model.inputShape.length === 1) {
        shape = { kind: "flat", dim: model.inputShape[0], perm: null };
        inputShape = [...model.inputShape];
    } else if (model.inputShape.length === 3) {
        const [h, w, c] = model.inputShape;
        shape = { kind: "spatial", h, w, c };
        inputShape = [c, h, w];
    } else {
        throw new UnsupportedLayerError(
            `input shape [${model.inputShape}] is not flat or 2-d spatial`,
        );
    }

    const layers: V1Layer[] = [];
    const pushRelu = () => {
        const last = layers[layers.length - 1];
        if (!last || last.type === "relu") {
            throw new UnsupportedLayerError(
                "relu must directly follow a dense or conv2d layer",
            );
        }
        layers.push({ type: "relu" });
    };

    for (const layer of model.layers) {
        if (layer.kind === "dense") {
            if (shape.kind !== "flat") {
                throw new UnsupportedLayerError(
                    `layer ${layer.name}: dense on a non-flat input (insert a Flatten first)`,
                );
            }
            layers.push(denseEntry(layer, shape.perm));
            shape = { kind: "flat", dim: layer.units, perm: null };
            if (layer.activation === "relu") pushRelu();
        } else if (layer.kind === "conv2d") {
            if (shape.kind !== "spatial") {
                throw new UnsupportedLayerError(`layer ${layer.name}: conv2d on a flat input`);
            }
            layers.push(convEntry(layer, shape.h, shape.w));
            const [oh, ow] = convOutputHW(shape.h, shape.w, layer);
            shape = { kind: "spatial", h: oh, w: ow, c: layer.filters };
            if (layer.activation === "relu") pushRelu();
        } else if (layer.kind === "flatten") {
            if (shape.kind === "spatial") {
                shape = {
                    kind: "flat",
                    dim: shape.h * shape.w * shape.c,
                    perm: flatPermutation(shape.h, shape.w, shape.c),
                };
            }
        } else {
            pushRelu();
        }
    }

    if (layers.length === 0) {
        throw new UnsupportedLayerError("checkpoint has no exportable layers");
    }
    if (layers[layers.length - 1].type === "relu") {
        throw new UnsupportedLayerError(
            "a final relu cannot be expressed in the target format",
        );
    }
    return { version: 1, input_shape: inputShape, layers };
}
