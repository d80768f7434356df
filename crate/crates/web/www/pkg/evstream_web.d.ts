/* tslint:disable */
/* eslint-disable */

/**
 * Splits `count` events over `tracks` tracks and rebuilds from the first
 * `keep` of them.
 */
export function partition_demo(strategy: string, count: number, tracks: number, events_per_track: number, keep: number): string;

/**
 * Reduces one synthetic window to what a `bandwidth_mbps` link carries and
 * returns before/after event images and sub-bin histograms.
 */
export function reduce_window(count: number, bandwidth_mbps: number, mode: string, seed: bigint): string;

/**
 * Runs a virtual-time experiment described by a TOML config and returns the
 * adaptive receiver's per-window series and summary.
 */
export function simulate(config_toml: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly partition_demo: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly reduce_window: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number, number];
    readonly simulate: (a: number, b: number) => [number, number, number, number];
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
