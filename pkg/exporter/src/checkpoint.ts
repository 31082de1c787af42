/** Read TF.js LayersModel artifacts (model.json + binary weight shards). */

import * as fs from "node:fs";
import * as path from "node:path";

import {
    CheckpointFormatError,
    ConvLayer,
    DenseLayer,
    SourceLayer,
    SourceModel,
    UnsupportedLayerError,
} from "./types.js";

interface WeightSpec {
    name: string;
    shape: number[];
    dtype: string;
}

interface ManifestGroup {
    paths: string[];
    weights: WeightSpec[];
}

function numel(shape: number[]): number {
    return shape.reduce((a, b) => a * b, 1);
}

function readWeights(dir: string, manifest: ManifestGroup[]): Map<string, { shape: number[]; data: Float64Array }> {
    const table = new Map<string, { shape: number[]; data: Float64Array }>();
    for (const group of manifest) {
        const buffers = group.paths.map((p) => fs.readFileSync(path.join(dir, p)));
        const blob = Buffer.concat(buffers);
        let offset = 0;
        for (const spec of group.weights) {
            if (spec.dtype !== "float32") {
                throw new CheckpointFormatError(`weight ${spec.name}: dtype ${spec.dtype} not supported`);
            }
            const count = numel(spec.shape);
            const data = new Float64Array(count);
            for (let i = 0; i < count; i++) {
                data[i] = blob.readFloatLE(offset + 4 * i);
            }
            offset += 4 * count;
            table.set(spec.name, { shape: spec.shape, data });
        }
        if (offset !== blob.length) {
            throw new CheckpointFormatError(
                `weight shard size ${blob.length} does not match manifest total ${offset}`,
            );
        }
    }
    return table;
}

function stripBatch(shape: unknown): number[] {
    if (!Array.isArray(shape) || shape.length < 2) {
        throw new CheckpointFormatError(`bad batch_input_shape ${JSON.stringify(shape)}`);
    }
    return shape.slice(1).map((v) => {
        if (typeof v !== "number" || !Number.isInteger(v) || v < 1) {
            throw new CheckpointFormatError(`bad input dimension ${v}`);
        }
        return v;
    });
}

function parseActivation(value: unknown, layerName: string): "linear" | "relu" {
    if (value === undefined || value === null || value === "linear") return "linear";
    if (value === "relu") return "relu";
    throw new UnsupportedLayerError(`layer ${layerName}: activation ${value} not supported`);
}

function lookup(
    weights: Map<string, { shape: number[]; data: Float64Array }>,
    name: string,
    expectShape: number[],
): Float64Array {
    const entry = weights.get(name);
    if (!entry) {
        throw new CheckpointFormatError(`missing weight tensor ${name}`);
    }
    if (entry.shape.length !== expectShape.length || entry.shape.some((v, i) => v !== expectShape[i])) {
        throw new CheckpointFormatError(
            `weight ${name} has shape [${entry.shape}], expected [${expectShape}]`,
        );
    }
    return entry.data;
}

/** Parse a checkpoint given the model.json path or its directory. */
export function loadCheckpoint(checkpointPath: string): SourceModel {
    let jsonPath = checkpointPath;
    if (fs.statSync(checkpointPath).isDirectory()) {
        jsonPath = path.join(checkpointPath, "model.json");
    }
    const dir = path.dirname(jsonPath);
    const doc = JSON.parse(fs.readFileSync(jsonPath, "utf-8"));

    const topology = doc.modelTopology;
    const config = topology?.model_config?.config ?? topology?.config;
    if (!config || !Array.isArray(config.layers)) {
        throw new CheckpointFormatError("model.json has no sequential layer list");
    }
    if (!Array.isArray(doc.weightsManifest)) {
        throw new CheckpointFormatError("model.json has no weightsManifest");
    }
    const weights = readWeights(dir, doc.weightsManifest);

    let inputShape: number[] | null = null;
    const layers: SourceLayer[] = [];
    let width: number[] | null = null; // running shape, [d] or [h, w, c]

    for (const entry of config.layers) {
        const cls = entry.class_name;
        const cfg = entry.config ?? {};
        if (cfg.batch_input_shape && inputShape === null) {
            inputShape = stripBatch(cfg.batch_input_shape);
            width = [...inputShape];
        }
        if (cls === "InputLayer") {
            continue;
        }
        if (inputShape === null || width === null) {
            throw new CheckpointFormatError("no input shape before the first real layer");
        }
        if (cls === "Dense") {
            if (width.length !== 1) {
                throw new UnsupportedLayerError(
                    `layer ${cfg.name}: dense on a non-flat input (insert a Flatten first)`,
                );
            }
            const units = cfg.units as number;
            const inDim = width[0];
            const layer: DenseLayer = {
                kind: "dense",
                name: cfg.name,
                units,
                inDim,
                activation: parseActivation(cfg.activation, cfg.name),
                kernel: lookup(weights, `${cfg.name}/kernel`, [inDim, units]),
                bias:
                    cfg.use_bias === false
                        ? new Float64Array(units)
                        : lookup(weights, `${cfg.name}/bias`, [units]),
            };
            layers.push(layer);
            width = [units];
        } else if (cls === "Conv2D") {
            if (width.length !== 3) {
                throw new UnsupportedLayerError(`layer ${cfg.name}: conv2d on a flat input`);
            }
            if (cfg.data_format && cfg.data_format !== "channelsLast" && cfg.data_format !== "channels_last") {
                throw new UnsupportedLayerError(`layer ${cfg.name}: data_format ${cfg.data_format}`);
            }
            const [h, w, c] = width;
            const filters = cfg.filters as number;
            const kernelSize = normalizePair(cfg.kernel_size ?? cfg.kernelSize);
            const strides = normalizePair(cfg.strides ?? [1, 1]);
            const padding = (cfg.padding ?? "valid") as string;
            if (padding !== "valid" && padding !== "same") {
                throw new UnsupportedLayerError(`layer ${cfg.name}: padding ${padding}`);
            }
            const layer: ConvLayer = {
                kind: "conv2d",
                name: cfg.name,
                filters,
                inChannels: c,
                kernelSize,
                strides,
                padding,
                activation: parseActivation(cfg.activation, cfg.name),
                kernel: lookup(weights, `${cfg.name}/kernel`, [kernelSize[0], kernelSize[1], c, filters]),
                bias:
                    cfg.use_bias === false
                        ? new Float64Array(filters)
                        : lookup(weights, `${cfg.name}/bias`, [filters]),
            };
            layers.push(layer);
            width = [...convOutputHW(h, w, layer), filters];
        } else if (cls === "Flatten") {
            layers.push({ kind: "flatten" });
            width = [numel(width)];
        } else if (cls === "Activation") {
            if (cfg.activation === "linear") continue;
            if (cfg.activation !== "relu") {
                throw new UnsupportedLayerError(`layer ${cfg.name}: activation ${cfg.activation}`);
            }
            layers.push({ kind: "relu" });
        } else if (cls === "ReLU") {
            if (cfg.max_value !== undefined && cfg.max_value !== null) {
                throw new UnsupportedLayerError(`layer ${cfg.name}: clipped ReLU not supported`);
            }
            layers.push({ kind: "relu" });
        } else {
            throw new UnsupportedLayerError(`layer ${cfg.name ?? "?"}: class ${cls} not supported`);
        }
    }
    if (inputShape === null) {
        throw new CheckpointFormatError("checkpoint declares no input shape");
    }
    return { inputShape, layers };
}

function normalizePair(value: unknown): [number, number] {
    if (typeof value === "number") return [value, value];
    if (Array.isArray(value) && value.length === 2) return [value[0], value[1]];
    throw new CheckpointFormatError(`bad size pair ${JSON.stringify(value)}`);
}

/** TF.js output spatial dims: ceil for "same", valid-window count otherwise. */
export function convOutputHW(h: number, w: number, layer: ConvLayer): [number, number] {
    const [kh, kw] = layer.kernelSize;
    const [sh, sw] = layer.strides;
    if (layer.padding === "same") {
        return [Math.ceil(h / sh), Math.ceil(w / sw)];
    }
    return [Math.floor((h - kh) / sh) + 1, Math.floor((w - kw) / sw) + 1];
}
