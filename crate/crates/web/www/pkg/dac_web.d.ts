/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    bounds(): Float64Array;
    frame_accuracy(frame: number): number;
    frame_boundary(frame: number, res: number): Float64Array;
    frame_count(): number;
    frame_predictions(frame: number): Uint32Array;
    frame_source_like(frame: number): Uint8Array;
    /**
     * Generates source and rotated target moons and trains the source model.
     */
    constructor(n: number, rotation_deg: number, seed: number);
    /**
     * Adapts for `epochs` epochs and returns the number of frames.
     */
    run(epochs: number, tau_c: number): number;
    source_holdout_accuracy(): number;
    source_only_accuracy(): number;
    source_points(): Float64Array;
    target_labels(): Uint32Array;
    target_points(): Float64Array;
}

/**
 * Flattened `(gap, clipped LMMD, tau * EMMD)` triples.
 */
export function mmd_curves(tau: number, theta_plus: number, steps: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_bounds: (a: number) => [number, number];
    readonly demo_frame_accuracy: (a: number, b: number) => number;
    readonly demo_frame_boundary: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_frame_count: (a: number) => number;
    readonly demo_frame_predictions: (a: number, b: number) => [number, number];
    readonly demo_frame_source_like: (a: number, b: number) => [number, number];
    readonly demo_new: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_run: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_source_holdout_accuracy: (a: number) => number;
    readonly demo_source_only_accuracy: (a: number) => number;
    readonly demo_source_points: (a: number) => [number, number];
    readonly demo_target_labels: (a: number) => [number, number];
    readonly demo_target_points: (a: number) => [number, number];
    readonly mmd_curves: (a: number, b: number, c: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
