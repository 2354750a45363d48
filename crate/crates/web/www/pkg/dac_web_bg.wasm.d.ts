/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_bounds: (a: number) => [number, number];
export const demo_frame_accuracy: (a: number, b: number) => number;
export const demo_frame_boundary: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_frame_count: (a: number) => number;
export const demo_frame_predictions: (a: number, b: number) => [number, number];
export const demo_frame_source_like: (a: number, b: number) => [number, number];
export const demo_new: (a: number, b: number, c: number) => [number, number, number];
export const demo_run: (a: number, b: number, c: number) => [number, number, number];
export const demo_source_holdout_accuracy: (a: number) => number;
export const demo_source_only_accuracy: (a: number) => number;
export const demo_source_points: (a: number) => [number, number];
export const demo_target_labels: (a: number) => [number, number];
export const demo_target_points: (a: number) => [number, number];
export const mmd_curves: (a: number, b: number, c: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
