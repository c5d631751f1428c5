/* tslint:disable */
/* eslint-disable */

export class LotterySession {
    free(): void;
    [Symbol.dispose](): void;
    connectivity(): string;
    isDone(): boolean;
    /**
     * `options` is a JSON object with any of the [`DemoOptions`] fields.
     */
    constructor(options: string);
    step(): string;
    totalRows(): number;
}

/**
 * Runs the built-in invariant checks; returns `[{name, passed, detail}]`.
 */
export function selftest(): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_lotterysession_free: (a: number, b: number) => void;
    readonly lotterysession_connectivity: (a: number) => [number, number];
    readonly lotterysession_isDone: (a: number) => number;
    readonly lotterysession_new: (a: number, b: number) => [number, number, number];
    readonly lotterysession_step: (a: number) => [number, number, number, number];
    readonly lotterysession_totalRows: (a: number) => number;
    readonly selftest: () => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
