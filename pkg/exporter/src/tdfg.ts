/*
 Patch-feature grid file format (little-endian):
   magic "TDFG" | version u32 = 1 | rows u32 | cols u32 | dim u32
   followed by rows*cols*dim float32 values, patch-row-major.
*/
import * as fs from 'fs';

export interface FeatureGridFile {
    rows: number;
    cols: number;
    dim: number;
    values: Float32Array;
}

const MAGIC = 'TDFG';
const VERSION = 1;

export function writeTdfg(path: string, grid: FeatureGridFile): void {
    if (grid.values.length !== grid.rows * grid.cols * grid.dim) {
        throw new Error(
            `payload length ${grid.values.length} does not match ${grid.rows}x${grid.cols}x${grid.dim}`
        );
    }
    const header = Buffer.alloc(20);
    header.write(MAGIC, 0, 'ascii');
    header.writeUInt32LE(VERSION, 4);
    header.writeUInt32LE(grid.rows, 8);
    header.writeUInt32LE(grid.cols, 12);
    header.writeUInt32LE(grid.dim, 16);
    const payload = Buffer.alloc(grid.values.length * 4);
    for (let i = 0; i < grid.values.length; i++) {
        payload.writeFloatLE(grid.values[i], i * 4);
    }
    fs.writeFileSync(path, Buffer.concat([header, payload]));
}

export function readTdfg(path: string): FeatureGridFile {
    const buf = fs.readFileSync(path);
    if (buf.length < 20 || buf.toString('ascii', 0, 4) !== MAGIC) {
        throw new Error(`${path}: bad magic`);
    }
    const version = buf.readUInt32LE(4);
    if (version !== VERSION) {
        throw new Error(`${path}: unsupported version ${version}`);
    }
    const rows = buf.readUInt32LE(8);
    const cols = buf.readUInt32LE(12);
    const dim = buf.readUInt32LE(16);
    const expected = rows * cols * dim * 4;
    if (buf.length - 20 !== expected) {
        throw new Error(`${path}: payload ${buf.length - 20} bytes, expected ${expected}`);
    }
    const values = new Float32Array(rows * cols * dim);
    for (let i = 0; i < values.length; i++) {
        values[i] = buf.readFloatLE(20 + i * 4);
    }
    return { rows, cols, dim, values };
}
