/**
 * CLIP ViT-L/14 backend via @xenova/transformers (onnx runtime).
 *
 * Loads the text and vision towers with projection heads; each emits 768-d
 * embeddings, matching the detector's 1536-d concatenated feature layout.
 * The package is an optional peer dependency - weights download on first
 * use and are cached by the library.
 */

import type { EncodedPair, EncodeRequest, Encoder } from './encoder.js';
import { HALF_DIM } from './encoder.js';

const MODEL = 'Xenova/clip-vit-large-patch14';
const TEXT_TOKEN_LIMIT = 77;

export function clipEncoder(): Encoder {
  let components: Promise<{
    tokenizer: any;
    processor: any;
    textModel: any;
    visionModel: any;
    RawImage: any;
  }> | null = null;

  async function load() {
    if (!components) {
      components = (async () => {
        let tf: any;
        try {
          tf = await import('@xenova/transformers');
        } catch {
          throw new Error(
            'the clip encoder needs @xenova/transformers (npm install @xenova/transformers); ' +
              'use --encoder hash for an offline run',
          );
        }
        const {
          AutoTokenizer,
          AutoProcessor,
          CLIPTextModelWithProjection,
          CLIPVisionModelWithProjection,
          RawImage,
        } = tf;
        console.error(`loading ${MODEL} (first run downloads weights)...`);
        const tokenizer = await AutoTokenizer.from_pretrained(MODEL);
        const processor = await AutoProcessor.from_pretrained(MODEL);
        const textModel = await CLIPTextModelWithProjection.from_pretrained(MODEL, {
          quantized: false,
        });
        const visionModel = await CLIPVisionModelWithProjection.from_pretrained(MODEL, {
          quantized: false,
        });
        return { tokenizer, processor, textModel, visionModel, RawImage };
      })();
    }
    return components;
  }

  return {
    name: 'clip',
    halfDim: HALF_DIM,
    async encodeBatch(rows: EncodeRequest[]): Promise<Array<EncodedPair | Error>> {
      const { tokenizer, processor, textModel, visionModel, RawImage } = await load();
      const results: Array<EncodedPair | Error> = new Array(rows.length);

      // images first: load failures drop out here, before any model call
      const images: any[] = [];
      const live: number[] = [];
      for (let i = 0; i < rows.length; i++) {
        try {
          images.push(await RawImage.read(rows[i].imagePath));
          live.push(i);
        } catch (err) {
          results[i] = new Error(
            `unreadable image: ${err instanceof Error ? err.message : String(err)}`,
          );
        }
      }
      if (live.length === 0) {
        return results;
      }

      // the processor resizes to the model's 224x224 input
      const pixels = await processor(images);
      const imageOut = await visionModel(pixels);

      const prompts = live.map((i) => rows[i].prompt);
      const tokens = tokenizer(prompts, {
        padding: true,
        truncation: true,
        max_length: TEXT_TOKEN_LIMIT,
      });
      const textOut = await textModel(tokens);

      const imageData: Float32Array = imageOut.image_embeds.data;
      const textData: Float32Array = textOut.text_embeds.data;
      for (let k = 0; k < live.length; k++) {
        const image = imageData.slice(k * HALF_DIM, (k + 1) * HALF_DIM);
        const text = textData.slice(k * HALF_DIM, (k + 1) * HALF_DIM);
        if (image.length !== HALF_DIM || text.length !== HALF_DIM) {
          results[live[k]] = new Error(
            `model emitted ${image.length}/${text.length} dims, expected ${HALF_DIM}`,
          );
          continue;
        }
        // tokenizer already truncated; flag rows that hit the limit
        const ids = tokens.input_ids.dims
          ? Number(tokens.input_ids.dims[1])
          : TEXT_TOKEN_LIMIT;
        results[live[k]] = {
          image,
          text,
          truncated: ids >= TEXT_TOKEN_LIMIT,
        };
      }
      return results;
    },
  };
}
