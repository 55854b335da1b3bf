/** Wire types mirroring the /api/v1 contract. */
export {};
