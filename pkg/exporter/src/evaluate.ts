/** Two independent forward evaluators used by the round-trip check.

`evalSource` follows the checkpoint's own channels-last semantics;
`evalV1Model` follows the exported document's channels-first semantics.
Agreement on random inputs is what the export manifest certifies.
*/

import { ConvLayer, DenseLayer, SourceModel, V1Model } from "./types.js";
import { convOutputHW } from "./checkpoint.js";

function relu(v: Float64Array): Float64Array {
    const out = new Float64Array(v.length);
    for (let i = 0; i < v.length; i++) out[i] = Math.max(v[i], 0);
    return out;
}

function denseSource(layer: DenseLayer, x: Float64Array): Float64Array {
    const out = new Float64Array(layer.units);
    for (let o = 0; o < layer.units; o++) {
        let acc = layer.bias[o];
        for (let i = 0; i < layer.inDim; i++) {
            acc += x[i] * layer.kernel[i * layer.units + o];
        }
        out[o] = acc;
    }
    return out;
}

function convSource(layer: ConvLayer, x: Float64Array, h: number, w: number): Float64Array {
    const [kh, kw] = layer.kernelSize;
    const [sh, sw] = layer.strides;
    const c = layer.inChannels;
    const [oh, ow] = convOutputHW(h, w, layer);
    let padTop = 0;
    let padLeft = 0;
    if (layer.padding === "same") {
        // TF pads the extra pixel on the bottom/right; the exporter rejects
        // that case, so here the split is always even
        padTop = Math.floor(Math.max((oh - 1) * sh + kh - h, 0) / 2);
        padLeft = Math.floor(Math.max((ow - 1) * sw + kw - w, 0) / 2);
    }
    const out = new Float64Array(oh * ow * layer.filters);
    for (let oy = 0; oy < oh; oy++) {
        for (let ox = 0; ox < ow; ox++) {
            for (let f = 0; f < layer.filters; f++) {
                let acc = layer.bias[f];
                for (let ky = 0; ky < kh; ky++) {
                    const y = oy * sh + ky - padTop;
                    if (y < 0 || y >= h) continue;
                    for (let kx = 0; kx < kw; kx++) {
                        const xx = ox * sw + kx - padLeft;
                        if (xx < 0 || xx >= w) continue;
                        for (let i = 0; i < c; i++) {
                            acc +=
                                x[(y * w + xx) * c + i] *
                                layer.kernel[((ky * kw + kx) * c + i) * layer.filters + f];
                        }
                    }
                }
                out[(oy * ow + ox) * layer.filters + f] = acc;
            }
        }
    }
    return out;
}

/** Forward pass in the checkpoint's semantics; x flattened channels-last. */
export function evalSource(model: SourceModel, x: Float64Array): Float64Array {
    let act = x;
    let shape = [...model.inputShape];
    for (const layer of model.layers) {
        if (layer.kind === "dense") {
            act = denseSource(layer, act);
            shape = [layer.units];
            if (layer.activation === "relu") act = relu(act);
        } else if (layer.kind === "conv2d") {
            const [h, w] = shape;
            act = convSource(layer, act, h, w);
            const [oh, ow] = convOutputHW(h, w, layer);
            shape = [oh, ow, layer.filters];
            if (layer.activation === "relu") act = relu(act);
        } else if (layer.kind === "flatten") {
            shape = [act.length];
        } else {
            act = relu(act);
        }
    }
    return act;
}

/** Forward pass in the exported document's semantics; x flattened
channels-first. Implements exactly what the target format promises. */
export function evalV1Model(doc: V1Model, x: Float64Array): Float64Array {
    let act = x;
    let shape = [...doc.input_shape];
    for (const entry of doc.layers) {
        if (entry.type === "dense") {
            const rows = entry.weight.length;
            const cols = entry.weight[0].length;
            const out = new Float64Array(rows);
            for (let o = 0; o < rows; o++) {
                let acc = entry.bias[o];
                for (let i = 0; i < cols; i++) acc += entry.weight[o][i] * act[i];
                out[o] = acc;
            }
            act = out;
            shape = [rows];
        } else if (entry.type === "conv2d") {
            const [c, h, w] = shape;
            const outC = entry.kernel.length;
            const inC = entry.kernel[0].length;
            const kh = entry.kernel[0][0].length;
            const kw = entry.kernel[0][0][0].length;
            const [sh, sw] = entry.stride;
            const [ph, pw] = entry.padding;
            const oh = Math.floor((h + 2 * ph - kh) / sh) + 1;
            const ow = Math.floor((w + 2 * pw - kw) / sw) + 1;
            const out = new Float64Array(outC * oh * ow);
            for (let o = 0; o < outC; o++) {
                for (let oy = 0; oy < oh; oy++) {
                    for (let ox = 0; ox < ow; ox++) {
                        let acc = entry.bias[o];
                        for (let i = 0; i < inC; i++) {
                            for (let ky = 0; ky < kh; ky++) {
                                const y = oy * sh + ky - ph;
                                if (y < 0 || y >= h) continue;
                                for (let kx = 0; kx < kw; kx++) {
                                    const xx = ox * sw + kx - pw;
                                    if (xx < 0 || xx >= w) continue;
                                    acc += entry.kernel[o][i][ky][kx] * act[(i * h + y) * w + xx];
                                }
                            }
                        }
                        out[(o * oh + oy) * ow + ox] = acc;
                    }
                }
            }
            act = out;
            shape = [outC, oh, ow];
        } else {
            act = relu(act);
        }
    }
    return act;
}
