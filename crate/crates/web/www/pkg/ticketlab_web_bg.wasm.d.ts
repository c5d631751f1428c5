/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_lotterysession_free: (a: number, b: number) => void;
export const lotterysession_connectivity: (a: number) => [number, number];
export const lotterysession_isDone: (a: number) => number;
export const lotterysession_new: (a: number, b: number) => [number, number, number];
export const lotterysession_step: (a: number) => [number, number, number, number];
export const lotterysession_totalRows: (a: number) => number;
export const selftest: () => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
