// variable assignment by shared memory value
unsigned int size = params[3].memref.size;
// shallow copy of shared memory buffer
void *buf = params[3].memref.buffer;
