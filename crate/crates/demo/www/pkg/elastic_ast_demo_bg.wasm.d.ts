/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_layout_free: (a: number, b: number) => void;
export const __wbg_specview_free: (a: number, b: number) => void;
export const layout_attention_mask: (a: number, b: number) => [number, number, number, number];
export const layout_max_slots: (a: number) => number;
export const layout_pad_tokens: (a: number) => number;
export const layout_placements: (a: number) => [number, number];
export const layout_row_len: (a: number) => number;
export const layout_rows: (a: number) => number;
export const pack_layout: (a: number, b: number, c: number) => [number, number, number];
export const spectrogram: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const specview_frame_shift_ms: (a: number) => number;
export const specview_n_frames: (a: number) => number;
export const specview_n_mels: (a: number) => number;
export const specview_values: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
