/* tslint:disable */
/* eslint-disable */

/**
 * True, naive and BE-ZIME curves plus the zero-inflation profile for the
 * first simulated subject.
 */
export function correct_curves(n: number, pi0: number, segments: number, piecewise: boolean, seed: bigint): string;

export function global_test(n: number, _null: boolean, b: number, rademacher: boolean, seed: bigint): string;

/**
 * Coefficient curves at τ = 0.25, 0.5, 0.75 against the truth.
 */
export function quantile_fit(n: number, pi0: number, joint: boolean, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly correct_curves: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly global_test: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly quantile_fit: (a: number, b: number, c: number, d: bigint) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
