/** Builders that write TF.js LayersModel artifacts for the tests. */

import * as fs from "node:fs";
import * as path from "node:path";

import { mulberry32 } from "../src/rng.js";

export type LayerDescriptor =
    | {
          class: "Dense";
          name?: string;
          units: number;
          activation?: string;
          /** [in][out] */
          kernel: number[][];
          bias?: number[];
      }
    | {
          class: "Conv2D";
          name?: string;
          filters: number;
          kernelSize: [number, number];
          strides?: [number, number];
          padding?: "valid" | "same";
          activation?: string;
          /** [kh][kw][in][out] */
          kernel: number[][][][];
          bias?: number[];
      }
    | { class: "Flatten" }
    | { class: "Activation"; activation: string }
    | { class: "ReLU" }
    | { class: "BatchNormalization"; name?: string };

function flatten(values: unknown): number[] {
    if (Array.isArray(values)) return values.flatMap(flatten);
    return [values as number];
}

/** Write model.json plus one weight shard; returns the model.json path. */
export function writeCheckpoint(
    dir: string,
    inputShape: number[],
    descriptors: LayerDescriptor[],
): string {
    fs.mkdirSync(dir, { recursive: true });
    const layers: object[] = [];
    const weightSpecs: object[] = [];
    const weightData: number[] = [];
    let counter = 0;

    descriptors.forEach((desc, index) => {
        const base: Record<string, unknown> = {};
        if (index === 0) {
            base.batch_input_shape = [null, ...inputShape];
        }
        if (desc.class === "Dense") {
            const name = desc.name ?? `dense_${counter++}`;
            const inDim = desc.kernel.length;
            layers.push({
                class_name: "Dense",
                config: {
                    ...base,
                    name,
                    units: desc.units,
                    activation: desc.activation ?? "linear",
                    use_bias: true,
                },
            });
            weightSpecs.push({ name: `${name}/kernel`, shape: [inDim, desc.units], dtype: "float32" });
            weightData.push(...flatten(desc.kernel));
            weightSpecs.push({ name: `${name}/bias`, shape: [desc.units], dtype: "float32" });
            weightData.push(...(desc.bias ?? new Array(desc.units).fill(0)));
        } else if (desc.class === "Conv2D") {
            const name = desc.name ?? `conv2d_${counter++}`;
            const [kh, kw] = desc.kernelSize;
            const inC = desc.kernel[0][0].length;
            layers.push({
                class_name: "Conv2D",
                config: {
                    ...base,
                    name,
                    filters: desc.filters,
                    kernel_size: desc.kernelSize,
                    strides: desc.strides ?? [1, 1],
                    padding: desc.padding ?? "valid",
                    activation: desc.activation ?? "linear",
                    data_format: "channels_last",
                    use_bias: true,
                },
            });
            weightSpecs.push({
                name: `${name}/kernel`,
                shape: [kh, kw, inC, desc.filters],
                dtype: "float32",
            });
            weightData.push(...flatten(desc.kernel));
            weightSpecs.push({ name: `${name}/bias`, shape: [desc.filters], dtype: "float32" });
            weightData.push(...(desc.bias ?? new Array(desc.filters).fill(0)));
        } else if (desc.class === "Flatten") {
            layers.push({ class_name: "Flatten", config: { ...base, name: `flatten_${counter++}` } });
        } else if (desc.class === "Activation") {
            layers.push({
                class_name: "Activation",
                config: { ...base, name: `activation_${counter++}`, activation: desc.activation },
            });
        } else if (desc.class === "ReLU") {
            layers.push({ class_name: "ReLU", config: { ...base, name: `re_lu_${counter++}` } });
        } else {
            layers.push({
                class_name: "BatchNormalization",
                config: { ...base, name: desc.name ?? `batch_normalization_${counter++}` },
            });
        }
    });

    const shard = Buffer.alloc(4 * weightData.length);
    weightData.forEach((v, i) => shard.writeFloatLE(Math.fround(v), 4 * i));
    fs.writeFileSync(path.join(dir, "group1-shard1of1.bin"), shard);

    const doc = {
        format: "layers-model",
        generatedBy: "keras",
        convertedBy: "TensorFlow.js Converter",
        modelTopology: {
            keras_version: "2.11.0",
            backend: "tensorflow",
            model_config: {
                class_name: "Sequential",
                config: { name: "sequential", layers },
            },
        },
        weightsManifest: [
            { paths: ["group1-shard1of1.bin"], weights: weightSpecs },
        ],
    };
    const jsonPath = path.join(dir, "model.json");
    fs.writeFileSync(jsonPath, JSON.stringify(doc));
    return jsonPath;
}

/** Deterministic random tensors for the builders. */
export function randomTensor(rand: () => number, shape: number[]): any {
    if (shape.length === 1) {
        return Array.from({ length: shape[0] }, () => 2 * rand() - 1);
    }
    return Array.from({ length: shape[0] }, () => randomTensor(rand, shape.slice(1)));
}

export function seededRand(seed: number): () => number {
    return mulberry32(seed);
}
