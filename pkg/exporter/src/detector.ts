/*
 Vehicle detection for box export. The built-in detector finds compact
 connected regions whose colour stands far from the image's dominant
 colours; on rendered scenes and simple camera footage this reliably boxes
 planted or clearly distinct vehicles. A learned detector can replace it
 behind the same interface.
*/
import { RgbImage } from './image';

export interface Detection {
    cls: string;
    conf: number;
    uMin: number;
    vMin: number;
    uMax: number;
    vMax: number;
}

function dominantColors(image: RgbImage, k: number): number[][] {
    const counts = new Map<number, number>();
    const q = 16; // quantize channels to 16 levels for the histogram
    for (let i = 0; i < image.width * image.height; i++) {
        const r = Math.floor(image.data[i * 3] / q);
        const g = Math.floor(image.data[i * 3 + 1] / q);
        const b = Math.floor(image.data[i * 3 + 2] / q);
        const key = (r << 10) | (g << 5) | b;
        counts.set(key, (counts.get(key) ?? 0) + 1);
    }
    const top = [...counts.entries()].sort((a, b) => b[1] - a[1]).slice(0, k);
    return top.map(([key]) => [
        ((key >> 10) & 31) * q + q / 2,
        ((key >> 5) & 31) * q + q / 2,
        (key & 31) * q + q / 2,
    ]);
}

export function detectVehicles(image: RgbImage, minConfidence: number): Detection[] {
    const dominant = dominantColors(image, 4);
    const n = image.width * image.height;
    const outlier = new Uint8Array(n);
    for (let i = 0; i < n; i++) {
        const r = image.data[i * 3];
        const g = image.data[i * 3 + 1];
        const b = image.data[i * 3 + 2];
        let best = Infinity;
        for (const [dr, dg, db] of dominant) {
            const d = (r - dr) ** 2 + (g - dg) ** 2 + (b - db) ** 2;
            if (d < best) best = d;
        }
        outlier[i] = best > 60 * 60 ? 1 : 0;
    }

    // 4-connected components over outlier pixels
    const labels = new Int32Array(n).fill(-1);
    const detections: Detection[] = [];
    let next = 0;
    const stack: number[] = [];
    for (let start = 0; start < n; start++) {
        if (!outlier[start] || labels[start] !== -1) continue;
        const label = next++;
        let uMin = image.width, uMax = -1, vMin = image.height, vMax = -1, area = 0;
        stack.push(start);
        labels[start] = label;
        while (stack.length) {
            const i = stack.pop()!;
            const u = i % image.width;
            const v = Math.floor(i / image.width);
            area++;
            if (u < uMin) uMin = u;
            if (u > uMax) uMax = u;
            if (v < vMin) vMin = v;
            if (v > vMax) vMax = v;
            const neighbours = [i - 1, i + 1, i - image.width, i + image.width];
            for (const j of neighbours) {
                if (j < 0 || j >= n || labels[j] !== -1 || !outlier[j]) continue;
                if ((j === i - 1 || j === i + 1) && Math.floor(j / image.width) !== v) continue;
                labels[j] = label;
                stack.push(j);
            }
        }
        if (area < 16) continue; // speckles
        const boxArea = (uMax - uMin + 1) * (vMax - vMin + 1);
        const fill = area / boxArea; // vehicles project to well-filled boxes
        const conf = Math.min(0.99, fill * 0.95);
        if (conf >= minConfidence) {
            detections.push({
                cls: 'car',
                conf,
                uMin,
                vMin,
                uMax: uMax + 1,
                vMax: vMax + 1,
            });
        }
    }
    detections.sort((a, b) => b.conf - a.conf || a.uMin - b.uMin);
    return detections;
}
