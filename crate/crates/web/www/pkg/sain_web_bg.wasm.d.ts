/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_new: (a: bigint, b: number) => [number, number, number];
export const demo_plan_and_push: (a: number) => [number, number, number, number];
export const demo_push: (a: number, b: number) => [number, number, number, number];
export const demo_scene: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
