#!/usr/bin/env node
/*
 Usage:
   drivelabel-export --images <dir> --out <dir> [--backbone id]
                     [--resolution 644] [--patch 14] [--conf 0.5]
                     [--no-features] [--no-boxes]
*/
import { DEFAULT_CONFIG, ExportConfig, runExport } from './export';

function parseArgs(argv: string[]): ExportConfig {
    const cfg: ExportConfig = {
        imagesDir: '',
        outDir: '',
        ...DEFAULT_CONFIG,
    };
    for (let i = 0; i < argv.length; i++) {
        const arg = argv[i];
        const next = () => {
            const v = argv[++i];
            if (v === undefined) throw new Error(`missing value for ${arg}`);
            return v;
        };
        switch (arg) {
            case '--images': cfg.imagesDir = next(); break;
            case '--out': cfg.outDir = next(); break;
            case '--backbone': cfg.backbone = next(); break;
            case '--resolution': cfg.resolution = parseInt(next(), 10); break;
            case '--patch': cfg.patchSize = parseInt(next(), 10); break;
            case '--conf': cfg.confThreshold = parseFloat(next()); break;
            case '--no-features': cfg.features = false; break;
            case '--no-boxes': cfg.boxes = false; break;
            default:
                throw new Error(`unknown argument: ${arg}`);
        }
    }
    if (!cfg.imagesDir || !cfg.outDir) {
        throw new Error('--images and --out are required');
    }
    return cfg;
}

function main(): number {
    try {
        const summary = runExport(parseArgs(process.argv.slice(2)));
        console.log(JSON.stringify(summary, null, 2));
        return 0;
    } catch (err) {
        console.error(`error: ${err instanceof Error ? err.message : err}`);
        return 1;
    }
}

process.exit(main());
