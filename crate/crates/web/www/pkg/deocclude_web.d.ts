/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Poisson blend of the prior into the occluded image.
     */
    blend(tolerance: number): Uint8Array;
    estimate(): Uint8Array;
    iterations(): number;
    constructor(size: number, seed: bigint);
    /**
     * Renders the mean toy face. Angles in radians; `sh` holds the first
     * four lighting coefficients (DC, y, z, x).
     */
    render(yaw: number, pitch: number, roll: number, sh: Float64Array): Uint8Array;
    /**
     * Restarts the solver from its initial estimate.
     */
    reset(): void;
    /**
     * `"image"`, `"truth"`, `"prior"`, `"hole"` or `"noised"`.
     */
    scene(which: string): Uint8Array;
    size(): number;
    /**
     * Runs `n` Adam steps and returns the objective before the last one.
     */
    step(n: number): number;
    steps(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_blend: (a: number, b: number) => [number, number, number, number];
    readonly demo_estimate: (a: number) => [number, number];
    readonly demo_iterations: (a: number) => number;
    readonly demo_new: (a: number, b: bigint) => [number, number, number];
    readonly demo_render: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly demo_reset: (a: number) => void;
    readonly demo_scene: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_size: (a: number) => number;
    readonly demo_step: (a: number, b: number) => [number, number, number];
    readonly demo_steps: (a: number) => number;
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
