/*
 Export runners: one TDFG feature file per frame, one JSONL line per
 detection, plus a sidecar recording the preprocessing policy so labels
 stay reproducible.
*/
import * as fs from 'fs';
import * as path from 'path';

import { loadBackbone } from './backbone';
import { detectVehicles } from './detector';
import { readPng, toSquare } from './image';
import { writeTdfg } from './tdfg';

export interface ExportConfig {
    imagesDir: string;
    outDir: string;
    backbone: string;
    resolution: number;
    patchSize: number;
    confThreshold: number;
    features: boolean;
    boxes: boolean;
}

export const DEFAULT_CONFIG: Omit<ExportConfig, 'imagesDir' | 'outDir'> = {
    backbone: 'patch-projection-1536',
    resolution: 644,
    patchSize: 14,
    confThreshold: 0.5,
    features: true,
    boxes: true,
};

export interface ExportSummary {
    frames: string[];
    featureFiles: number;
    boxLines: number;
    sidecarPath: string;
}

export function listFrames(imagesDir: string): string[] {
    return fs
        .readdirSync(imagesDir)
        .filter((f) => f.endsWith('.png'))
        .map((f) => f.replace(/\.png$/, ''))
        .sort();
}

export function runExport(cfg: ExportConfig): ExportSummary {
    if (cfg.resolution % cfg.patchSize !== 0) {
        throw new Error(
            `resolution ${cfg.resolution} not divisible by patch size ${cfg.patchSize}`
        );
    }
    const frames = listFrames(cfg.imagesDir);
    if (frames.length === 0) {
        throw new Error(`no .png frames under ${cfg.imagesDir}`);
    }
    fs.mkdirSync(cfg.outDir, { recursive: true });
    const featuresDir = path.join(cfg.outDir, 'features');
    if (cfg.features) fs.mkdirSync(featuresDir, { recursive: true });

    const backbone = cfg.features ? loadBackbone(cfg.backbone, cfg.patchSize) : null;
    const grid = cfg.resolution / cfg.patchSize;
    const boxLines: string[] = [];
    const preprocess: Record<string, unknown> = {};
    let featureFiles = 0;

    for (const frame of frames) {
        const source = readPng(path.join(cfg.imagesDir, `${frame}.png`));
        const { image, info } = toSquare(source, cfg.resolution);
        preprocess[frame] = info;
        if (backbone) {
            const values = backbone.extract(image);
            writeTdfg(path.join(featuresDir, `${frame}.tdfg`), {
                rows: grid,
                cols: grid,
                dim: backbone.dim,
                values,
            });
            featureFiles++;
        }
        if (cfg.boxes) {
            // detections reported in the original image's pixel space
            for (const det of detectVehicles(image, cfg.confThreshold)) {
                boxLines.push(
                    JSON.stringify({
                        frame,
                        class: det.cls,
                        conf: Number(det.conf.toFixed(4)),
                        u_min: (det.uMin + info.cropLeft) / info.scale,
                        v_min: (det.vMin + info.cropTop) / info.scale,
                        u_max: (det.uMax + info.cropLeft) / info.scale,
                        v_max: (det.vMax + info.cropTop) / info.scale,
                    })
                );
            }
        }
    }

    if (cfg.boxes) {
        fs.writeFileSync(path.join(cfg.outDir, 'boxes.jsonl'), boxLines.map((l) => l + '\n').join(''));
    }
    const sidecarPath = path.join(cfg.outDir, 'preprocess.json');
    fs.writeFileSync(
        sidecarPath,
        JSON.stringify(
            {
                backbone: cfg.features ? cfg.backbone : null,
                resolution: cfg.resolution,
                patchSize: cfg.patchSize,
                confThreshold: cfg.confThreshold,
                frames: preprocess,
            },
            null,
            2
        ) + '\n'
    );
    return { frames, featureFiles, boxLines: boxLines.length, sidecarPath };
}
