/*
 Patch-feature backbones. The pipeline treats the backbone as a replaceable
 adapter: anything that maps an image to a rows x cols x dim grid of patch
 feature vectors can stand behind this interface.

 The built-in default is a deterministic seeded projection: each patch is
 flattened and multiplied by a fixed random matrix, then squashed. It keeps
 the defining property the pipeline relies on (similar patches give similar
 vectors), runs anywhere, and reproduces byte-identically; swapping in a
 large pretrained vision transformer only changes the registry entry.
*/
import { RgbImage } from './image';

export interface FeatureBackbone {
    name: string;
    patchSize: number;
    dim: number;
    extract(image: RgbImage): Float32Array;
}

/** Deterministic PRNG (mulberry32), so exports never depend on the platform. */
function mulberry32(seed: number): () => number {
    let a = seed >>> 0;
    return () => {
        a = (a + 0x6d2b79f5) >>> 0;
        let t = a;
        t = Math.imul(t ^ (t >>> 15), t | 1);
        t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
        return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
    };
}

export class ProjectionBackbone implements FeatureBackbone {
    readonly name: string;
    readonly patchSize: number;
    readonly dim: number;
    private readonly projection: Float32Array; // dim x (patch*patch*3)

    constructor(dim = 1536, patchSize = 14, seed = 0x7df4) {
        this.name = `patch-projection-${dim}`;
        this.patchSize = patchSize;
        this.dim = dim;
        const inputLen = patchSize * patchSize * 3;
        const rand = mulberry32(seed);
        this.projection = new Float32Array(dim * inputLen);
        const scale = 1 / Math.sqrt(inputLen);
        for (let i = 0; i < this.projection.length; i++) {
            // sum of two uniforms, centred: cheap, smooth, deterministic
            this.projection[i] = (rand() + rand() - 1) * scale;
        }
    }

    extract(image: RgbImage): Float32Array {
        const p = this.patchSize;
        if (image.width % p !== 0 || image.height % p !== 0) {
            throw new Error(`image ${image.width}x${image.height} not divisible by patch ${p}`);
        }
        const rows = image.height / p;
        const cols = image.width / p;
        const inputLen = p * p * 3;
        const patch = new Float32Array(inputLen);
        const out = new Float32Array(rows * cols * this.dim);
        for (let r = 0; r < rows; r++) {
            for (let c = 0; c < cols; c++) {
                let k = 0;
                for (let y = 0; y < p; y++) {
                    const row = (r * p + y) * image.width + c * p;
                    for (let x = 0; x < p; x++) {
                        const base = (row + x) * 3;
                        patch[k++] = image.data[base] / 127.5 - 1.0;
                        patch[k++] = image.data[base + 1] / 127.5 - 1.0;
                        patch[k++] = image.data[base + 2] / 127.5 - 1.0;
                    }
                }
                const offset = (r * cols + c) * this.dim;
                for (let d = 0; d < this.dim; d++) {
                    let acc = 0;
                    const wBase = d * inputLen;
                    for (let i = 0; i < inputLen; i++) {
                        acc += this.projection[wBase + i] * patch[i];
                    }
                    out[offset + d] = Math.tanh(acc);
                }
            }
        }
        return out;
    }
}

export function loadBackbone(id: string, patchSize: number): FeatureBackbone {
    if (id === 'patch-projection-1536' || id === 'default') {
        return new ProjectionBackbone(1536, patchSize);
    }
    const small = id.match(/^patch-projection-(\d+)$/);
    if (small) {
        return new ProjectionBackbone(parseInt(small[1], 10), patchSize);
    }
    throw new Error(
        `backbone '${id}' is not available: pretrained transformer weights are not ` +
        `bundled; use a patch-projection backbone or register a loader for '${id}'`
    );
}
