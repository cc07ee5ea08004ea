/*
 RGB image buffer helpers: PNG decode, aspect-preserving resize + center crop.
*/
import * as fs from 'fs';
import { PNG } from 'pngjs';

export interface RgbImage {
    width: number;
    height: number;
    data: Uint8Array; // RGB, row-major, 3 bytes per pixel
}

export function readPng(path: string): RgbImage {
    const png = PNG.sync.read(fs.readFileSync(path));
    const data = new Uint8Array(png.width * png.height * 3);
    for (let i = 0; i < png.width * png.height; i++) {
        data[i * 3] = png.data[i * 4];
        data[i * 3 + 1] = png.data[i * 4 + 1];
        data[i * 3 + 2] = png.data[i * 4 + 2];
    }
    return { width: png.width, height: png.height, data };
}

export function writePng(path: string, image: RgbImage): void {
    const png = new PNG({ width: image.width, height: image.height });
    for (let i = 0; i < image.width * image.height; i++) {
        png.data[i * 4] = image.data[i * 3];
        png.data[i * 4 + 1] = image.data[i * 3 + 1];
        png.data[i * 4 + 2] = image.data[i * 3 + 2];
        png.data[i * 4 + 3] = 255;
    }
    fs.writeFileSync(path, PNG.sync.write(png));
}

function sampleBilinear(image: RgbImage, x: number, y: number, c: number): number {
    const x0 = Math.max(0, Math.min(image.width - 1, Math.floor(x)));
    const y0 = Math.max(0, Math.min(image.height - 1, Math.floor(y)));
    const x1 = Math.min(image.width - 1, x0 + 1);
    const y1 = Math.min(image.height - 1, y0 + 1);
    const fx = Math.min(1, Math.max(0, x - x0));
    const fy = Math.min(1, Math.max(0, y - y0));
    const at = (xx: number, yy: number) => image.data[(yy * image.width + xx) * 3 + c];
    const top = at(x0, y0) * (1 - fx) + at(x1, y0) * fx;
    const bot = at(x0, y1) * (1 - fx) + at(x1, y1) * fx;
    return top * (1 - fy) + bot * fy;
}

export interface PreprocessInfo {
    policy: 'resize-shorter-side-center-crop';
    sourceWidth: number;
    sourceHeight: number;
    scale: number;
    cropLeft: number;
    cropTop: number;
}

/** Aspect-preserving resize (shorter side to `size`) followed by a center crop. */
export function toSquare(image: RgbImage, size: number): { image: RgbImage; info: PreprocessInfo } {
    const scale = size / Math.min(image.width, image.height);
    const scaledW = Math.round(image.width * scale);
    const scaledH = Math.round(image.height * scale);
    const cropLeft = Math.floor((scaledW - size) / 2);
    const cropTop = Math.floor((scaledH - size) / 2);
    const out = new Uint8Array(size * size * 3);
    for (let y = 0; y < size; y++) {
        const sy = (y + cropTop + 0.5) / scale - 0.5;
        for (let x = 0; x < size; x++) {
            const sx = (x + cropLeft + 0.5) / scale - 0.5;
            for (let c = 0; c < 3; c++) {
                out[(y * size + x) * 3 + c] = Math.round(sampleBilinear(image, sx, sy, c));
            }
        }
    }
    return {
        image: { width: size, height: size, data: out },
        info: {
            policy: 'resize-shorter-side-center-crop',
            sourceWidth: image.width,
            sourceHeight: image.height,
            scale,
            cropLeft,
            cropTop,
        },
    };
}
