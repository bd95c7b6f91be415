/* tslint:disable */
/* eslint-disable */

/**
 * Clusters a seeded 2-D point cloud; noise points carry label -1.
 */
export function dbscan_2d(seed: number, n: number, eps: number, min_pts: number): string;

/**
 * Domain-summary distances as the random projection widens. `dims` is a
 * comma-separated list such as `"16,64,256"`.
 */
export function projection_distances(dims: string, seed: number): string;

/**
 * Learns a small synthetic domain sequence and returns its accuracy matrix.
 */
export function run_accuracy_matrix(domains: number, epochs: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly dbscan_2d: (a: number, b: number, c: number, d: number) => [number, number];
    readonly projection_distances: (a: number, b: number, c: number) => [number, number];
    readonly run_accuracy_matrix: (a: number, b: number, c: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
