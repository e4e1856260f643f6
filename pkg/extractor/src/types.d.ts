// optional peer dependency, loaded dynamically by the clip backend
declare module '@xenova/transformers';
