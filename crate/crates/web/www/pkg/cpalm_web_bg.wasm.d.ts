/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_reconstruction_free: (a: number, b: number) => void;
export const majorant_curve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
export const reconstruction_ground_truth: (a: number) => [number, number];
export const reconstruction_image: (a: number) => [number, number];
export const reconstruction_iterations: (a: number) => number;
export const reconstruction_mask: (a: number) => [number, number];
export const reconstruction_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
export const reconstruction_objective: (a: number) => number;
export const reconstruction_ratio: (a: number) => number;
export const reconstruction_rel_err: (a: number) => number;
export const reconstruction_size: (a: number) => number;
export const reconstruction_snr_db: (a: number) => number;
export const reconstruction_step: (a: number, b: number) => [number, number, number];
export const reconstruction_zero_filled: (a: number) => [number, number];
export const reconstruction_zero_filled_snr_db: (a: number) => number;
export const shrink_point: (a: number, b: number, c: number, d: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
