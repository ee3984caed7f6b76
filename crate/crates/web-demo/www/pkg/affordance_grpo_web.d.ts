/* tslint:disable */
/* eslint-disable */

/**
 * IoU, intersection area and corner L1 between two inclusive-corner boxes.
 */
export function box_metrics(ax1: number, ay1: number, ax2: number, ay2: number, bx1: number, by1: number, bx2: number, by2: number): string;

/**
 * Scores `response` against `targets_json` (an answer-style array of
 * `{bbox_2d, point_2d, affordance}` objects) with the toy lexicon.
 * `disabled` is a comma-separated list of reward components to switch off.
 */
export function score(response: string, targets_json: string, disabled: string): string;

/**
 * A synthetic scene plus its canonical perfect response.
 */
export function toy_scene(seed: number, difficulty_name: string): string;

/**
 * Runs toy GRPO training and returns the per-step curves.
 */
export function train_curve(difficulty_name: string, seed: number, steps: number, min_targets: number, disable_box_num: boolean): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly box_metrics: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number) => [number, number];
    readonly score: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly toy_scene: (a: number, b: number, c: number) => [number, number];
    readonly train_curve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
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
