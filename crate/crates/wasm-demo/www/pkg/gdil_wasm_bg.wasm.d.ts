/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const dbscan_2d: (a: number, b: number, c: number, d: number) => [number, number];
export const projection_distances: (a: number, b: number, c: number) => [number, number];
export const run_accuracy_matrix: (a: number, b: number, c: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
