/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const bufferPriorities: (a: number, b: number, c: number, d: number) => [number, number];
export const proposal: (a: number, b: number) => [number, number];
export const resampleEntropy: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
