/** Shared shapes for checkpoint parsing, conversion and verification. */

export interface DenseLayer {
    kind: "dense";
    name: string;
    units: number;
    inDim: number;
    activation: "linear" | "relu";
    /** row-major [inDim, units], TF.js kernel layout */
    kernel: Float64Array;
    bias: Float64Array;
}

export interface ConvLayer {
    kind: "conv2d";
    name: string;
    filters: number;
    inChannels: number;
    kernelSize: [number, number];
    strides: [number, number];
    padding: "valid" | "same";
    activation: "linear" | "relu";
    /** row-major [kh, kw, inChannels, filters], TF.js kernel layout */
    kernel: Float64Array;
    bias: Float64Array;
}

export interface FlattenLayer {
    kind: "flatten";
}

export interface ReluLayer {
    kind: "relu";
}

export type SourceLayer = DenseLayer | ConvLayer | FlattenLayer | ReluLayer;

export interface SourceModel {
    /** without the batch dimension: [d] or [h, w, c] (channels last) */
    inputShape: number[];
    layers: SourceLayer[];
}

/** One entry of the version-1 model document. */
export type V1Layer =
    | { type: "dense"; weight: number[][]; bias: number[] }
    | { type: "relu" }
    | {
          type: "conv2d";
          kernel: number[][][][];
          bias: number[];
          stride: [number, number];
          padding: [number, number];
      };

export interface V1Model {
    version: 1;
    /** [d] or [channels, height, width] */
    input_shape: number[];
    layers: V1Layer[];
}

export interface ExportManifest {
    source: string;
    output: string;
    verified: boolean;
    max_forward_discrepancy: number;
    inputs_checked: number;
    seed: number;
}

export class UnsupportedLayerError extends Error {}
export class CheckpointFormatError extends Error {}
