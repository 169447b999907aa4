/* tslint:disable */
/* eslint-disable */

export function closed_loop(system: string, x0: Float64Array, horizon: number): Float64Array;

export function geodesic_fan(system: string, count: number, radius: number, twist: number, samples: number): Float64Array;

/**
 * Dimension of a built-in system, or 0 for an unknown name.
 */
export function system_dim(system: string): number;

export function value_slice(system: string, x3: number, half_width: number, resolution: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly closed_loop: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly geodesic_fan: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly system_dim: (a: number, b: number) => number;
    readonly value_slice: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
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
