/* tslint:disable */
/* eslint-disable */

/**
 * Runs CPALM on a synthetic scan one batch of iterations at a time.
 */
export class Reconstruction {
    free(): void;
    [Symbol.dispose](): void;
    ground_truth(): Float64Array;
    image(): Float64Array;
    iterations(): number;
    mask(): Uint8Array;
    /**
     * `model` is `logsum` or `lp`; `p` is used only by `lp`.
     */
    constructor(size: number, coils: number, ratio: number, sigma: number, seed: number, model: string, p: number);
    objective(): number;
    ratio(): number;
    rel_err(): number;
    size(): number;
    snr_db(): number;
    /**
     * Advances `n` iterations and returns the objective after them.
     */
    step(n: number): number;
    zero_filled(): Float64Array;
    zero_filled_snr_db(): number;
}

/**
 * Samples `g(t) = φ(|t|)` and its tangent majorant about `anchor` on
 * `[-t_max, t_max]`. Returns `[t, g, q]` triples, flattened.
 */
export function majorant_curve(kind: string, param: number, anchor: number, t_max: number, samples: number): Float64Array;

/**
 * Point `w⁺ = argmin weight·‖w‖ + (beta/2)‖w - c‖²` for a 2-D centre `c`.
 */
export function shrink_point(weight: number, beta: number, cx: number, cy: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_reconstruction_free: (a: number, b: number) => void;
    readonly majorant_curve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly reconstruction_ground_truth: (a: number) => [number, number];
    readonly reconstruction_image: (a: number) => [number, number];
    readonly reconstruction_iterations: (a: number) => number;
    readonly reconstruction_mask: (a: number) => [number, number];
    readonly reconstruction_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number, number];
    readonly reconstruction_objective: (a: number) => number;
    readonly reconstruction_ratio: (a: number) => number;
    readonly reconstruction_rel_err: (a: number) => number;
    readonly reconstruction_size: (a: number) => number;
    readonly reconstruction_snr_db: (a: number) => number;
    readonly reconstruction_step: (a: number, b: number) => [number, number, number];
    readonly reconstruction_zero_filled: (a: number) => [number, number];
    readonly reconstruction_zero_filled_snr_db: (a: number) => number;
    readonly shrink_point: (a: number, b: number, c: number, d: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
