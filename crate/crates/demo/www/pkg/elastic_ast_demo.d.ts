/* tslint:disable */
/* eslint-disable */

/**
 * Packing of a list of token counts into rows of `budget`.
 */
export class Layout {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Row-major `row_len × row_len` mask of one row, 1 where attention is allowed.
     */
    attention_mask(row: number): Uint8Array;
    pad_tokens(): number;
    /**
     * `[row, slot, start, len]` per sample, flattened, in input order.
     */
    placements(): Uint32Array;
    readonly max_slots: number;
    readonly row_len: number;
    readonly rows: number;
}

/**
 * Log-mel energies, frequency-major.
 */
export class SpecView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    values(): Float32Array;
    readonly frame_shift_ms: number;
    readonly n_frames: number;
    readonly n_mels: number;
}

export function pack_layout(lengths: Uint32Array, budget: number): Layout;

/**
 * `mode` is `"fshift"` (factor 1.0 to 4.0) or `"avgpool"` (factor 1 to 4).
 */
export function spectrogram(samples: Float32Array, sample_rate: number, n_mels: number, mode: string, factor: number): SpecView;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_layout_free: (a: number, b: number) => void;
    readonly __wbg_specview_free: (a: number, b: number) => void;
    readonly layout_attention_mask: (a: number, b: number) => [number, number, number, number];
    readonly layout_max_slots: (a: number) => number;
    readonly layout_pad_tokens: (a: number) => number;
    readonly layout_placements: (a: number) => [number, number];
    readonly layout_row_len: (a: number) => number;
    readonly layout_rows: (a: number) => number;
    readonly pack_layout: (a: number, b: number, c: number) => [number, number, number];
    readonly spectrogram: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly specview_frame_shift_ms: (a: number) => number;
    readonly specview_n_frames: (a: number) => number;
    readonly specview_n_mels: (a: number) => number;
    readonly specview_values: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
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
